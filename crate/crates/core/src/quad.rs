//! Adaptive Gauss–Kronrod (7, 15) quadrature.

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];

const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Integrates `f` over `[a, b]` to within `max(abs_tol, rel_tol * |I|)`.
///
/// Integrable endpoint singularities are tolerated (nodes never touch the
/// endpoints) but converge slowly; prefer [`integrate_singular`] for those.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let (whole, err) = gk15(&f, a, b);
    let tol = abs_tol.max(rel_tol * whole.abs());
    if err <= tol {
        return whole;
    }
    // Global adaptive bisection: always refine the worst interval.
    let mut parts = vec![(a, b, whole, err)];
    for _ in 0..2000 {
        let (total, total_err) = parts
            .iter()
            .fold((0.0, 0.0), |(s, e), p| (s + p.2, e + p.3));
        if total_err <= abs_tol.max(rel_tol * total.abs()) {
            return total;
        }
        let worst = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let (lo, hi, val, _) = parts.swap_remove(worst);
        if hi - lo < 1e-12 * (b - a).abs() {
            // Too narrow to refine further: freeze it.
            parts.push((lo, hi, val, 0.0));
            continue;
        }
        let mid = 0.5 * (lo + hi);
        let (l, le) = gk15(&f, lo, mid);
        let (r, re) = gk15(&f, mid, hi);
        parts.push((lo, mid, l, le));
        parts.push((mid, hi, r, re));
    }
    parts.iter().map(|p| p.2).sum()
}

/// Integrates over `[a, b]` when `f` may have an integrable power-type
/// singularity at one or both endpoints. A quadratic change of variables
/// `x = end ± (b-a) v^2` removes singularities weaker than `|x - end|^{-1/2}`
/// and softens stronger ones.
pub fn integrate_singular(
    f: impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    singular_at_a: bool,
    singular_at_b: bool,
    abs_tol: f64,
    rel_tol: f64,
) -> f64 {
    // Nodes that round onto the singular endpoint itself are dropped; the
    // mass lost there is below the resolution of `x` near that endpoint.
    let from_a = |w: f64| {
        let f = &f;
        move |v: f64| {
            let x = a + w * v * v;
            if x == a {
                0.0
            } else {
                f(x) * 2.0 * w * v
            }
        }
    };
    let from_b = |w: f64| {
        let f = &f;
        move |v: f64| {
            let x = b - w * v * v;
            if x == b {
                0.0
            } else {
                f(x) * 2.0 * w * v
            }
        }
    };
    match (singular_at_a, singular_at_b) {
        (false, false) => integrate(&f, a, b, abs_tol, rel_tol),
        (true, false) => integrate(from_a(b - a), 0.0, 1.0, abs_tol, rel_tol),
        (false, true) => integrate(from_b(b - a), 0.0, 1.0, abs_tol, rel_tol),
        (true, true) => {
            let w = 0.5 * (b - a);
            integrate(from_a(w), 0.0, 1.0, 0.5 * abs_tol, rel_tol)
                + integrate(from_b(w), 0.0, 1.0, 0.5 * abs_tol, rel_tol)
        }
    }
}

/// `int_a^b (x - a)^ea (b - x)^eb f(x - a, b - x) dx` for a smooth `f` and
/// exponents above -1; an absent exponent means no factor.
///
/// Each factor is removed by `x = end ± w u^{1/(1+e)}`, which turns
/// `(x - end)^e dx` into the constant `w^{1+e} du / (1+e)`. The factor is
/// never evaluated, so exponents close to -1 (where `u^{1/(1+e)}` underflows)
/// are harmless. With both factors present the interval is split in half.
/// `f` receives the distances to both ends; the one to the substituted end
/// is formed without cancellation.
pub fn integrate_power_singular(
    f: impl Fn(f64, f64) -> f64,
    a: f64,
    b: f64,
    ea: Option<f64>,
    eb: Option<f64>,
    abs_tol: f64,
    rel_tol: f64,
) -> f64 {
    let len = b - a;
    // `other` is the exponent of the far end, whose distance stays >= w.
    let half = |w: f64, e: f64, other: Option<f64>, at_a: bool| {
        let f = &f;
        let m = 1.0 / (1.0 + e);
        let scale = w.powf(1.0 + e) * m;
        move |u: f64| {
            let d = w * u.powf(m);
            let far = len - d;
            let g = if at_a { f(d, far) } else { f(far, d) };
            scale * g * other.map_or(1.0, |o| far.powf(o))
        }
    };
    match (ea, eb) {
        (None, None) => integrate(|x| f(x - a, b - x), a, b, abs_tol, rel_tol),
        (Some(e), None) => integrate(half(len, e, None, true), 0.0, 1.0, abs_tol, rel_tol),
        (None, Some(e)) => integrate(half(len, e, None, false), 0.0, 1.0, abs_tol, rel_tol),
        (Some(ea), Some(eb)) => {
            // Each half sees the far factor on [w, len].
            let w = 0.5 * len;
            integrate(
                half(w, ea, Some(eb), true),
                0.0,
                1.0,
                0.5 * abs_tol,
                rel_tol,
            ) + integrate(
                half(w, eb, Some(ea), false),
                0.0,
                1.0,
                0.5 * abs_tol,
                rel_tol,
            )
        }
    }
}
