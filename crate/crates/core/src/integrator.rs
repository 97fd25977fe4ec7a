//! Dormand-Prince 5(4) with its fourth-order continuous extension, specialised
//! to 3-vectors, with optional detection of the first upward crossing of a
//! level by the last component.

#[derive(Debug, Clone, Copy)]
pub struct StepControl {
    /// Absolute local error tolerance per accepted step (max norm).
    pub tol: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for StepControl {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            h_max: 0.25,
            max_steps: 10_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Stop {
    /// `y[2]` reached the level at time `t`.
    Crossed { t: f64, y: [f64; 3] },
    /// Integrated up to the end time without a crossing.
    Reached { y: [f64; 3] },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Failure {
    Singular,
    StepLimit,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

type V3 = [f64; 3];

#[inline]
fn comb(y: V3, h: f64, terms: &[(f64, &V3)]) -> V3 {
    let mut out = y;
    for (c, k) in terms {
        for i in 0..3 {
            out[i] += h * c * k[i];
        }
    }
    out
}

/// Continuous extension over one accepted step.
struct Dense {
    r: [V3; 5],
}

impl Dense {
    fn new(y0: V3, y1: V3, h: f64, k: &[V3; 7]) -> Self {
        let mut r = [[0.0; 3]; 5];
        for i in 0..3 {
            let dy = y1[i] - y0[i];
            let bspl = h * k[0][i] - dy;
            r[0][i] = y0[i];
            r[1][i] = dy;
            r[2][i] = bspl;
            r[3][i] = dy - h * k[6][i] - bspl;
            r[4][i] = h * (D1 * k[0][i] + D3 * k[2][i] + D4 * k[3][i] + D5 * k[4][i] + D6 * k[5][i] + D7 * k[6][i]);
        }
        Self { r }
    }

    fn eval(&self, theta: f64) -> V3 {
        let t1 = 1.0 - theta;
        std::array::from_fn(|i| {
            let r = &self.r;
            r[0][i] + theta * (r[1][i] + t1 * (r[2][i] + theta * (r[3][i] + t1 * r[4][i])))
        })
    }
}

/// Integrates `dy/dt = rhs(t, y)` from `(t0, y0)` to `t_end`. If `level` is
/// given, stops at the first accepted step over which `y[2]` rises to the
/// level, refining the crossing by bisection on the dense output until
/// `|y[2] - level| < 1e-9 |level|`. `rhs` returns `None` at a singular point,
/// which shrinks the step; persistent singularity is a failure.
pub(crate) fn integrate<R>(mut rhs: R, t0: f64, y0: V3, t_end: f64, level: Option<f64>, ctl: &StepControl) -> Result<Stop, Failure>
where
    R: FnMut(f64, V3) -> Option<V3>,
{
    if let Some(l) = level {
        if y0[2] >= l {
            return Ok(Stop::Crossed { t: t0, y: y0 });
        }
    }
    let mut t = t0;
    let mut y = y0;
    let mut k1 = rhs(t, y).ok_or(Failure::Singular)?;
    let span = t_end - t0;
    let mut h = (1e-3 * span).min(ctl.h_max).max(1e-12);
    let mut steps = 0usize;

    while t < t_end {
        if steps >= ctl.max_steps {
            return Err(Failure::StepLimit);
        }
        let last = t + h >= t_end;
        if last {
            h = t_end - t;
        }
        let stage = |rhs: &mut R, c: f64, yy: V3| rhs(t + c * h, yy);
        let trial = (|| {
            let k2 = stage(&mut rhs, C2, comb(y, h, &[(A21, &k1)]))?;
            let k3 = stage(&mut rhs, C3, comb(y, h, &[(A31, &k1), (A32, &k2)]))?;
            let k4 = stage(&mut rhs, C4, comb(y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]))?;
            let k5 = stage(&mut rhs, C5, comb(y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]))?;
            let k6 = stage(&mut rhs, 1.0, comb(y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]))?;
            let y5 = comb(y, h, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
            let k7 = stage(&mut rhs, 1.0, y5)?;
            Some((y5, [k1, k2, k3, k4, k5, k6, k7]))
        })();
        let Some((y5, k)) = trial else {
            h *= 0.25;
            if h < 1e-10 * span {
                return Err(Failure::Singular);
            }
            continue;
        };
        let mut err: f64 = 0.0;
        for i in 0..3 {
            let e = h * (E1 * k[0][i] + E3 * k[2][i] + E4 * k[3][i] + E5 * k[4][i] + E6 * k[5][i] + E7 * k[6][i]);
            err = err.max(e.abs());
        }
        let ratio = err / ctl.tol;
        if ratio <= 1.0 {
            steps += 1;
            if let Some(l) = level {
                if y5[2] >= l {
                    let dense = Dense::new(y, y5, h, &k);
                    let (theta, yc) = bisect(&dense, l);
                    return Ok(Stop::Crossed { t: t + theta * h, y: yc });
                }
            }
            t = if last { t_end } else { t + h };
            y = y5;
            k1 = k[6];
            let factor = if ratio == 0.0 { 5.0 } else { (0.9 * ratio.powf(-0.2)).clamp(0.2, 5.0) };
            h = (h * factor).min(ctl.h_max);
        } else {
            h *= (0.9 * ratio.powf(-0.2)).max(0.2);
        }
    }
    Ok(Stop::Reached { y })
}

fn bisect(dense: &Dense, level: f64) -> (f64, V3) {
    let tol = 1e-9 * level.abs().max(f64::MIN_POSITIVE);
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut best = (1.0, dense.eval(1.0));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let y = dense.eval(mid);
        best = (mid, y);
        if (y[2] - level).abs() < tol {
            break;
        }
        if y[2] < level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Harmonic motion in (y0, y1) plus uniform drift in y2.
    fn rhs(_t: f64, y: V3) -> Option<V3> {
        Some([y[1], -y[0], 1.0 + 0.5 * y[0]])
    }

    fn exact(t: f64) -> V3 {
        // y0 = sin t, y1 = cos t, y2 = t + 0.5 (1 - cos t)
        [t.sin(), t.cos(), t + 0.5 * (1.0 - t.cos())]
    }

    #[test]
    fn reaches_end_accurately() {
        let ctl = StepControl { tol: 1e-10, ..Default::default() };
        let s = integrate(rhs, 0.0, exact(0.0), 10.0, None, &ctl).unwrap();
        let Stop::Reached { y } = s else { panic!() };
        let e = exact(10.0);
        for i in 0..3 {
            assert!((y[i] - e[i]).abs() < 1e-8, "{i}: {} vs {}", y[i], e[i]);
        }
    }

    #[test]
    fn dense_output_locates_crossing() {
        // crossing of y2 = 4 solved independently by Newton on the exact solution
        let g = |t: f64| t + 0.5 * (1.0 - t.cos()) - 4.0;
        let dg = |t: f64| 1.0 + 0.5 * t.sin();
        let mut root = 3.0;
        for _ in 0..50 {
            root -= g(root) / dg(root);
        }
        let ctl = StepControl { tol: 1e-10, h_max: 2.0, ..Default::default() };
        let s = integrate(rhs, 0.0, exact(0.0), 20.0, Some(4.0), &ctl).unwrap();
        let Stop::Crossed { t, y } = s else { panic!() };
        assert!((y[2] - 4.0).abs() < 4e-9);
        assert!((t - root).abs() < 1e-8, "{t} vs {root}");
    }

    #[test]
    fn dense_output_interpolates_within_step() {
        let h = 0.3;
        let y0 = exact(0.0);
        let f = |y: V3| rhs(0.0, y).unwrap();
        let k1 = f(y0);
        let k2 = f(comb(y0, h, &[(A21, &k1)]));
        let k3 = f(comb(y0, h, &[(A31, &k1), (A32, &k2)]));
        let k4 = f(comb(y0, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
        let k5 = f(comb(y0, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]));
        let k6 = f(comb(y0, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]));
        let y5 = comb(y0, h, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
        let k7 = f(y5);
        let dense = Dense::new(y0, y5, h, &[k1, k2, k3, k4, k5, k6, k7]);
        for theta in [0.1, 0.37, 0.5, 0.81] {
            let y = dense.eval(theta);
            let e = exact(theta * h);
            for i in 0..3 {
                assert!((y[i] - e[i]).abs() < 1e-6, "theta {theta}: {} vs {}", y[i], e[i]);
            }
        }
        assert_eq!(dense.eval(1.0), y5);
    }

    #[test]
    fn singular_rhs_fails() {
        let r = integrate(|t, _y| if t > 0.5 { None } else { Some([0.0, 0.0, 1.0]) }, 0.0, [0.0; 3], 2.0, None, &StepControl::default());
        assert_eq!(r.unwrap_err(), Failure::Singular);
    }

    #[test]
    fn start_beyond_level_is_immediate() {
        let s = integrate(rhs, 0.0, [0.0, 1.0, 5.0], 1.0, Some(4.0), &StepControl::default()).unwrap();
        assert_eq!(s, Stop::Crossed { t: 0.0, y: [0.0, 1.0, 5.0] });
    }
}
