//! Classical fixed-step fourth-order Runge-Kutta on flat state vectors.

use nalgebra::DVector;

/// One RK4 step of `y' = f(t, y)` from `t` to `t + h`.
pub fn rk4_step<F>(f: &mut F, t: f64, h: f64, y: &DVector<f64>) -> DVector<f64>
where
    F: FnMut(f64, &DVector<f64>) -> DVector<f64>,
{
    let k1 = f(t, y);
    let k2 = f(t + 0.5 * h, &(y + &k1 * (0.5 * h)));
    let k3 = f(t + 0.5 * h, &(y + &k2 * (0.5 * h)));
    let k4 = f(t + h, &(y + &k3 * h));
    y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    fn integrate<F>(mut f: F, mut y: DVector<f64>, t_end: f64, h: f64) -> DVector<f64>
    where
        F: FnMut(f64, &DVector<f64>) -> DVector<f64>,
    {
        let n = (t_end / h).round() as usize;
        let mut t = 0.0;
        for _ in 0..n {
            y = rk4_step(&mut f, t, h, &y);
            t += h;
        }
        y
    }

    #[test]
    fn exponential_matches_closed_form() {
        let y = integrate(|_, y| y.clone(), dvector![1.0], 1.0, 1e-3);
        assert!((y[0] - std::f64::consts::E).abs() < 1e-11);
    }

    #[test]
    fn harmonic_oscillator_fourth_order_convergence() {
        // y'' = -y from (1, 0); exact solution (cos t, -sin t).
        let rhs = |_t: f64, y: &DVector<f64>| dvector![y[1], -y[0]];
        let exact = dvector![1.0f64.cos(), -(1.0f64.sin())];
        let err = |h: f64| (integrate(rhs, dvector![1.0, 0.0], 1.0, h) - &exact).norm();
        let (e1, e2) = (err(1e-2), err(5e-3));
        let order = (e1 / e2).log2();
        assert!(order > 3.9 && order < 4.1, "measured order {order}");
    }
}
