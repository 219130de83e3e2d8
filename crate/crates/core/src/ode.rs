//! Adaptive Dormand–Prince 5(4) for complex linear systems.

use crate::error::{Error, Result};
use crate::C64;

#[derive(Debug, Clone, Copy)]
pub(crate) struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
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
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// Fifth minus fourth order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Integrate `y' = f(t, y)` from `t0` to `t1`. `h` carries the step size
/// between calls. Returns the number of accepted steps.
pub(crate) fn integrate<F>(mut f: F, t0: f64, t1: f64, y: &mut [C64], h: &mut f64, tol: Tolerances) -> Result<usize>
where
    F: FnMut(f64, &[C64], &mut [C64]),
{
    let n = y.len();
    let span = t1 - t0;
    if span <= 0.0 {
        return Ok(0);
    }
    let mut k: Vec<Vec<C64>> = (0..7).map(|_| vec![C64::new(0.0, 0.0); n]).collect();
    let mut tmp = vec![C64::new(0.0, 0.0); n];
    let mut t = t0;
    if !(*h > 0.0) || *h > span {
        *h = span;
    }
    f(t, y, &mut k[0]);
    let mut steps = 0;
    let mut attempts = 0;
    while t < t1 {
        attempts += 1;
        if attempts > tol.max_steps {
            return Err(Error::StepSize { t, step: *h });
        }
        let last = t + *h >= t1;
        let hh = if last { t1 - t } else { *h };
        macro_rules! stage {
            ($dst:expr, $c:expr, [$(($a:expr, $j:expr)),*]) => {{
                for i in 0..n {
                    tmp[i] = y[i] $(+ k[$j][i] * (hh * $a))*;
                }
                let (head, tail) = k.split_at_mut($dst);
                let _ = head;
                f(t + $c * hh, &tmp, &mut tail[0]);
            }};
        }
        stage!(1, C2, [(A21, 0)]);
        stage!(2, C3, [(A31, 0), (A32, 1)]);
        stage!(3, C4, [(A41, 0), (A42, 1), (A43, 2)]);
        stage!(4, C5, [(A51, 0), (A52, 1), (A53, 2), (A54, 3)]);
        stage!(5, 1.0, [(A61, 0), (A62, 1), (A63, 2), (A64, 3), (A65, 4)]);
        // Fifth-order solution into tmp, then k[6] = f(t + h, tmp).
        for i in 0..n {
            tmp[i] = y[i] + (k[0][i] * B1 + k[2][i] * B3 + k[3][i] * B4 + k[4][i] * B5 + k[5][i] * B6) * hh;
        }
        {
            let (head, tail) = k.split_at_mut(6);
            let _ = head;
            f(t + hh, &tmp, &mut tail[0]);
        }
        let mut err: f64 = 0.0;
        for i in 0..n {
            let e = (k[0][i] * E1 + k[2][i] * E3 + k[3][i] * E4 + k[4][i] * E5 + k[5][i] * E6 + k[6][i] * E7) * hh;
            let sc = tol.atol + tol.rtol * y[i].norm().max(tmp[i].norm());
            err = err.max(e.norm() / sc);
        }
        if !err.is_finite() {
            return Err(Error::StepSize { t, step: hh });
        }
        if err <= 1.0 {
            t = if last { t1 } else { t + hh };
            y.copy_from_slice(&tmp);
            k.swap(0, 6);
            steps += 1;
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        let next = hh * factor;
        if err > 1.0 && next < 1e-14 * span {
            return Err(Error::StepSize { t, step: next });
        }
        if !(last && err <= 1.0) {
            *h = next;
        }
    }
    Ok(steps)
}
