//! Dormand–Prince 8(5,3) explicit Runge–Kutta step for autonomous systems.
//!
//! Coefficients follow Hairer's `DOP853`; the error estimate combines the
//! fifth- and third-order embedded solutions the same way.

#[allow(unused_imports)]
use num_traits::Float;

const STAGES: usize = 12;

#[rustfmt::skip]
const A: [&[f64]; STAGES] = [
    &[],
    &[0.05260015195876773],
    &[0.0197250569845379, 0.0591751709536137],
    &[0.02958758547680685, 0.0, 0.08876275643042054],
    &[0.2413651341592667, 0.0, -0.8845494793282861, 0.924834003261792],
    &[0.037037037037037035, 0.0, 0.0, 0.17082860872947386, 0.12546768756682242],
    &[0.037109375, 0.0, 0.0, 0.17025221101954405, 0.06021653898045596, -0.017578125],
    &[0.03709200011850479, 0.0, 0.0, 0.17038392571223998, 0.10726203044637328, -0.015319437748624402, 0.008273789163814023],
    &[0.6241109587160757, 0.0, 0.0, -3.3608926294469414, -0.868219346841726, 27.59209969944671, 20.154067550477894, -43.48988418106996],
    &[0.47766253643826434, 0.0, 0.0, -2.4881146199716677, -0.590290826836843, 21.230051448181193, 15.279233632882423, -33.28821096898486, -0.020331201708508627],
    &[-0.9371424300859873, 0.0, 0.0, 5.186372428844064, 1.0914373489967295, -8.149787010746927, -18.52006565999696, 22.739487099350505, 2.4936055526796523, -3.0467644718982196],
    &[2.273310147516538, 0.0, 0.0, -10.53449546673725, -2.0008720582248625, -17.9589318631188, 27.94888452941996, -2.8589982771350235, -8.87285693353063, 12.360567175794303, 0.6433927460157636],
];

#[rustfmt::skip]
const B: [f64; STAGES] = [0.054293734116568765, 0.0, 0.0, 0.0, 0.0, 4.450312892752409, 1.8915178993145003, -5.801203960010585, 0.3111643669578199, -0.1521609496625161, 0.20136540080403034, 0.04471061572777259];

#[rustfmt::skip]
const ER: [f64; STAGES] = [0.01312004499419488, 0.0, 0.0, 0.0, 0.0, -1.2251564463762044, -0.4957589496572502, 1.6643771824549864, -0.35032884874997366, 0.3341791187130175, 0.08192320648511571, -0.022355307863886294];

/// Third-order comparison weights on stages 1, 9 and 12.
const BHH: [f64; 3] = [0.2440944881889764, 0.7338466882816118, 0.022058823529411766];
/// Result of one trial step.
#[derive(Debug, Clone, Copy)]
pub struct Step<const N: usize> {
    pub y: [f64; N],
    /// Scaled error estimate; the step is acceptable when `err <= 1`.
    pub err: f64,
}

/// Advances `y` by `h`, given `k1 = f(y)`. Any error from `f` aborts the step.
pub fn step<const N: usize, E>(
    f: &mut impl FnMut(&[f64; N]) -> Result<[f64; N], E>,
    y: &[f64; N],
    k1: &[f64; N],
    h: f64,
    atol: f64,
    rtol: f64,
) -> Result<Step<N>, E> {
    let mut k = [[0.0; N]; STAGES];
    k[0] = *k1;
    for s in 1..STAGES {
        let mut ys = *y;
        for (j, a) in A[s].iter().enumerate() {
            if *a != 0.0 {
                for i in 0..N {
                    ys[i] += h * a * k[j][i];
                }
            }
        }
        k[s] = f(&ys)?;
    }

    let mut y_new = *y;
    let mut err = 0.0;
    let mut err2 = 0.0;
    for i in 0..N {
        let mut inc = 0.0;
        let mut e5 = 0.0;
        for s in 0..STAGES {
            inc += B[s] * k[s][i];
            e5 += ER[s] * k[s][i];
        }
        y_new[i] = y[i] + h * inc;
        let e3 = inc - BHH[0] * k[0][i] - BHH[1] * k[8][i] - BHH[2] * k[11][i];
        let sk = atol + rtol * y[i].abs().max(y_new[i].abs());
        err += (e5 / sk).powi(2);
        err2 += (e3 / sk).powi(2);
    }
    let mut deno = err + 0.01 * err2;
    if deno <= 0.0 {
        deno = 1.0;
    }
    let err = h.abs() * err * (1.0 / (N as f64 * deno)).sqrt();
    Ok(Step { y: y_new, err })
}

/// Starting step size from the local scale of `y` and `f`.
pub fn initial_step<const N: usize, E>(
    f: &mut impl FnMut(&[f64; N]) -> Result<[f64; N], E>,
    y: &[f64; N],
    f0: &[f64; N],
    atol: f64,
    rtol: f64,
    h_max: f64,
) -> Result<f64, E> {
    let mut dnf = 0.0;
    let mut dny = 0.0;
    for i in 0..N {
        let sk = atol + rtol * y[i].abs();
        dnf += (f0[i] / sk).powi(2);
        dny += (y[i] / sk).powi(2);
    }
    let mut h = if dnf <= 1e-10 || dny <= 1e-10 { 1e-6 } else { (dny / dnf).sqrt() * 0.01 };
    h = h.min(h_max);
    let mut y1 = *y;
    for i in 0..N {
        y1[i] += h * f0[i];
    }
    let f1 = f(&y1)?;
    let mut der2 = 0.0;
    for i in 0..N {
        let sk = atol + rtol * y[i].abs();
        der2 += ((f1[i] - f0[i]) / sk).powi(2);
    }
    let der2 = der2.sqrt() / h;
    let der12 = der2.abs().max(dnf.sqrt());
    let h1 = if der12 <= 1e-15 { (h * 1e-3).max(1e-6) } else { (0.01 / der12).powf(1.0 / 8.0) };
    Ok((100.0 * h).min(h1).min(h_max))
}

/// Proportional-integral step-size controller.
#[derive(Debug, Clone, Copy)]
pub struct Controller {
    pub safety: f64,
    /// Bounds on `h_new / h`.
    pub min_factor: f64,
    pub max_factor: f64,
    pub beta: f64,
    err_old: f64,
}

impl Default for Controller {
    fn default() -> Self {
        Self { safety: 0.9, min_factor: 0.333, max_factor: 6.0, beta: 0.04, err_old: 1e-4 }
    }
}

impl Controller {
    /// Next step size after an accepted step.
    pub fn accept(&mut self, h: f64, err: f64, after_reject: bool) -> f64 {
        let expo = 1.0 / 8.0 - 0.2 * self.beta;
        let fac = err.powf(expo) / self.err_old.powf(self.beta);
        let fac = fac / self.safety;
        let fac = fac.clamp(1.0 / self.max_factor, 1.0 / self.min_factor);
        self.err_old = err.max(1e-4);
        let h_new = h / fac;
        if after_reject { h_new.min(h) } else { h_new }
    }

    /// Smaller step after a rejected one.
    pub fn reject(&self, h: f64, err: f64) -> f64 {
        let expo = 1.0 / 8.0 - 0.2 * self.beta;
        h / (err.powf(expo) / self.safety).min(1.0 / self.min_factor)
    }
}
