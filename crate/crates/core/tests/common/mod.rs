#![allow(clippy::excessive_precision, dead_code)]

//! Independent oracles shared by the integration tests.

pub mod quad {
    const XGK: [f64; 8] = [
        0.991_455_371_120_812_639_206_854_697_526_329,
        0.949_107_912_342_758_524_526_189_684_047_851,
        0.864_864_423_359_769_072_789_712_788_640_926,
        0.741_531_185_599_394_439_863_864_773_280_788,
        0.586_087_235_467_691_130_294_144_845_693_013,
        0.405_845_151_377_397_166_906_606_412_076_961,
        0.207_784_955_007_898_467_600_689_403_773_245,
        0.0,
    ];
    const WGK: [f64; 8] = [
        0.022_935_322_010_529_224_963_732_008_058_970,
        0.063_092_092_629_978_553_290_700_663_189_204,
        0.104_790_010_322_250_183_839_876_322_541_518,
        0.140_653_259_715_525_918_745_189_590_510_238,
        0.169_004_726_639_267_902_826_583_426_598_550,
        0.190_350_578_064_785_409_913_256_402_421_014,
        0.204_432_940_075_298_892_414_161_999_234_649,
        0.209_482_141_084_727_828_012_999_174_891_714,
    ];
    const WG: [f64; 4] = [
        0.129_484_966_168_869_693_270_611_432_679_082,
        0.279_705_391_489_276_667_901_467_771_423_780,
        0.381_830_050_505_118_944_950_369_775_488_975,
        0.417_959_183_673_469_387_755_102_040_816_327,
    ];

    fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64, f64) {
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        let fc = f(c);
        let mut k = fc * WGK[7];
        let mut g = fc * WG[3];
        let mut kabs = fc.abs() * WGK[7];
        for j in 0..7 {
            let x = h * XGK[j];
            let (lo, hi) = (f(c - x), f(c + x));
            k += WGK[j] * (lo + hi);
            kabs += WGK[j] * (lo.abs() + hi.abs());
            if j % 2 == 1 {
                g += WG[j / 2] * (lo + hi);
            }
        }
        (k * h, ((k - g) * h).abs(), kabs * h.abs())
    }

    /// Adaptive Gauss-Kronrod (7/15) with recursive bisection. The tolerance is
    /// relative to the integral of `|f|`; panels whose error estimate reaches the
    /// rounding floor are accepted.
    pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64) -> f64 {
        let pieces = 64usize;
        let h = (b - a) / pieces as f64;
        let scale: f64 = (0..pieces)
            .map(|i| gk15(&f, a + h * i as f64, a + h * (i + 1) as f64).2)
            .sum();
        let tol = rel_tol * scale.max(1e-300);
        (0..pieces)
            .map(|i| {
                let lo = a + h * i as f64;
                recurse(&f, lo, lo + h, tol / pieces as f64, 0)
            })
            .sum()
    }

    fn recurse<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: usize) -> f64 {
        let (v, err, vabs) = gk15(f, a, b);
        if err <= tol || err <= 50.0 * f64::EPSILON * vabs || depth >= 16 {
            return v;
        }
        let m = 0.5 * (a + b);
        recurse(f, a, m, 0.5 * tol, depth + 1) + recurse(f, m, b, 0.5 * tol, depth + 1)
    }
}

/// Svensson basis evaluated with `expm1`, independent of the library path.
pub fn basis(lambda: [f64; 2], tau: f64) -> [f64; 4] {
    let load = |l: f64| -(-l * tau).exp_m1() / (l * tau);
    [
        1.0,
        load(lambda[0]),
        load(lambda[0]) - (-lambda[0] * tau).exp(),
        load(lambda[1]) - (-lambda[1] * tau).exp(),
    ]
}

/// `<phi_i, phi_j>` on (0, T) by adaptive quadrature.
pub fn gram_by_quadrature(lambda: [f64; 2], horizon: f64) -> [[f64; 4]; 4] {
    let mut g = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in i..4 {
            let v = quad::integrate(
                |t| {
                    let b = basis(lambda, t);
                    b[i] * b[j]
                },
                0.0,
                horizon,
                1e-14,
            );
            g[i][j] = v;
            g[j][i] = v;
        }
    }
    g
}

pub mod e1 {
    const EULER: f64 = 0.577_215_664_901_532_860_61;

    /// `-gamma - ln x + sum (-1)^{k+1} x^k / (k k!)`, summed to convergence.
    pub fn series(x: f64) -> f64 {
        let mut sum = 0.0;
        let mut pow_over_fact = 1.0;
        let mut k = 1.0;
        loop {
            pow_over_fact *= x / k;
            let sign = if (k as i64) % 2 == 1 { 1.0 } else { -1.0 };
            let t = sign * pow_over_fact / k;
            sum += t;
            if t.abs() < 1e-18 * sum.abs() || k > 400.0 {
                break;
            }
            k += 1.0;
        }
        -EULER - x.ln() + sum
    }

    /// Classical fraction `e^{-x}/(x + 1/(1 + 1/(x + 2/(1 + 2/(x + ...)))))`,
    /// evaluated backward from a fixed depth.
    pub fn continued_fraction(x: f64) -> f64 {
        let depth = 4000;
        let mut t = 0.0;
        for n in (1..=depth).rev() {
            let nf = n as f64;
            t = nf / (1.0 + nf / (x + t));
        }
        (-x).exp() / (x + t)
    }
}
