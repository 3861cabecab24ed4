//! Fourth-order central difference stencils and their tensor products.

const FIRST: [(f64, f64); 4] = [
    (-2.0, 1.0 / 12.0),
    (-1.0, -8.0 / 12.0),
    (1.0, 8.0 / 12.0),
    (2.0, -1.0 / 12.0),
];

const SECOND: [(f64, f64); 5] = [
    (-2.0, -1.0 / 12.0),
    (-1.0, 16.0 / 12.0),
    (0.0, -30.0 / 12.0),
    (1.0, 16.0 / 12.0),
    (2.0, -1.0 / 12.0),
];

fn taps(order: u8) -> &'static [(f64, f64)] {
    match order {
        0 => &[(0.0, 1.0)],
        1 => &FIRST,
        2 => &SECOND,
        _ => panic!("stencil order {order} not supported"),
    }
}

/// `d f / dx` at `x`.
pub(crate) fn d1(mut f: impl FnMut(f64) -> f64, x: f64, h: f64) -> f64 {
    FIRST.iter().map(|&(o, c)| c * f(x + o * h)).sum::<f64>() / h
}

/// `d^2 f / dx^2` at `x`.
pub(crate) fn d2(mut f: impl FnMut(f64) -> f64, x: f64, h: f64) -> f64 {
    SECOND.iter().map(|&(o, c)| c * f(x + o * h)).sum::<f64>() / (h * h)
}

/// Mixed partial of a function of three variables; `orders[i] <= 2`.
pub(crate) fn partial3(mut f: impl FnMut([f64; 3]) -> f64, at: [f64; 3], orders: [u8; 3], h: f64) -> f64 {
    let mut acc = 0.0;
    for &(oa, ca) in taps(orders[0]) {
        for &(ob, cb) in taps(orders[1]) {
            for &(oc, cc) in taps(orders[2]) {
                acc += ca * cb * cc * f([at[0] + oa * h, at[1] + ob * h, at[2] + oc * h]);
            }
        }
    }
    let total: u8 = orders.iter().sum();
    acc / h.powi(total as i32)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_on_quartics() {
        let f = |x: f64| x.powi(4) - 2.0 * x.powi(3) + x;
        let (x, h) = (0.7, 0.1);
        assert!((d1(f, x, h) - (4.0 * x.powi(3) - 6.0 * x * x + 1.0)).abs() < 1e-12);
        assert!((d2(f, x, h) - (12.0 * x * x - 12.0 * x)).abs() < 1e-10);
    }

    #[test]
    fn mixed_partials() {
        let f = |p: [f64; 3]| p[0] * p[0] * p[1] * p[2].sin();
        let at: [f64; 3] = [0.3, -0.4, 1.1];
        let want = 2.0 * at[2].cos();
        let got = partial3(f, at, [2, 1, 1], 1e-2);
        assert!((got - want).abs() < 1e-7, "{got} vs {want}");
    }
}
