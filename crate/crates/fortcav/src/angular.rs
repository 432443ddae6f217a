//! Angular-momentum algebra: Wigner 3-j and 6-j symbols and Clebsch-Gordan
//! coefficients via the Racah sum formulas.
//!
//! All quantum numbers are passed as doubled integers (`two_j = 2j`) so that
//! half-integer spins stay exact. The j values in this crate never exceed
//! ~15/2, well inside the range where f64 factorials are exact enough for
//! 1e-12 accuracy.

/// Largest factorial argument needed for the doubled-j range used here.
const FACT_LEN: usize = 64;

fn factorials() -> &'static [f64; FACT_LEN] {
    use std::sync::OnceLock;
    static TABLE: OnceLock<[f64; FACT_LEN]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = [1.0_f64; FACT_LEN];
        for i in 1..FACT_LEN {
            t[i] = t[i - 1] * i as f64;
        }
        t
    })
}

fn fact(n: i32) -> f64 {
    factorials()[n as usize]
}

/// Triangle coefficient Δ(a,b,c) on doubled arguments; None if the triangle
/// inequality fails or parities are inconsistent.
fn triangle(two_a: i32, two_b: i32, two_c: i32) -> Option<f64> {
    let s1 = two_a + two_b - two_c;
    let s2 = two_a - two_b + two_c;
    let s3 = -two_a + two_b + two_c;
    let s4 = two_a + two_b + two_c;
    if s1 < 0 || s2 < 0 || s3 < 0 || s1 % 2 != 0 || s4 % 2 != 0 {
        return None;
    }
    Some(fact(s1 / 2) * fact(s2 / 2) * fact(s3 / 2) / fact(s4 / 2 + 1))
}

fn parity(k: i32) -> f64 {
    if k % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Wigner 3-j symbol (j1 j2 j3; m1 m2 m3), doubled arguments.
pub fn wigner_3j(two_j1: i32, two_j2: i32, two_j3: i32, two_m1: i32, two_m2: i32, two_m3: i32) -> f64 {
    if two_m1 + two_m2 + two_m3 != 0 {
        return 0.0;
    }
    if two_m1.abs() > two_j1 || two_m2.abs() > two_j2 || two_m3.abs() > two_j3 {
        return 0.0;
    }
    // m and j must have the same parity for physical states.
    if (two_j1 - two_m1) % 2 != 0 || (two_j2 - two_m2) % 2 != 0 || (two_j3 - two_m3) % 2 != 0 {
        return 0.0;
    }
    let tri = match triangle(two_j1, two_j2, two_j3) {
        Some(t) => t,
        None => return 0.0,
    };

    let a1 = (two_j1 + two_m1) / 2;
    let a2 = (two_j1 - two_m1) / 2;
    let a3 = (two_j2 + two_m2) / 2;
    let a4 = (two_j2 - two_m2) / 2;
    let a5 = (two_j3 + two_m3) / 2;
    let a6 = (two_j3 - two_m3) / 2;
    let norm = (tri * fact(a1) * fact(a2) * fact(a3) * fact(a4) * fact(a5) * fact(a6)).sqrt();

    // Summation limits for the Racah form.
    let b1 = (two_j1 + two_j2 - two_j3) / 2;
    let b2 = (two_j1 - two_m1) / 2;
    let b3 = (two_j2 + two_m2) / 2;
    let c1 = (two_j2 - two_j3 - two_m1) / 2;
    let c2 = (two_j1 - two_j3 + two_m2) / 2;
    let k_min = 0.max(c1).max(c2);
    let k_max = b1.min(b2).min(b3);

    let mut sum = 0.0;
    for k in k_min..=k_max {
        let denom = fact(k) * fact(b1 - k) * fact(b2 - k) * fact(b3 - k) * fact(k - c1) * fact(k - c2);
        sum += parity(k) / denom;
    }
    let phase = parity((two_j1 - two_j2 - two_m3) / 2);
    phase * norm * sum
}

/// Clebsch-Gordan coefficient <j1 m1, j2 m2 | j3 m3>, doubled arguments.
pub fn clebsch_gordan(two_j1: i32, two_m1: i32, two_j2: i32, two_m2: i32, two_j3: i32, two_m3: i32) -> f64 {
    let phase = parity((-two_j1 + two_j2 - two_m3) / 2);
    phase
        * ((two_j3 + 1) as f64).sqrt()
        * wigner_3j(two_j1, two_j2, two_j3, two_m1, two_m2, -two_m3)
}

/// Wigner 6-j symbol {j1 j2 j3; j4 j5 j6}, doubled arguments.
pub fn wigner_6j(two_j1: i32, two_j2: i32, two_j3: i32, two_j4: i32, two_j5: i32, two_j6: i32) -> f64 {
    let t1 = triangle(two_j1, two_j2, two_j3);
    let t2 = triangle(two_j1, two_j5, two_j6);
    let t3 = triangle(two_j4, two_j2, two_j6);
    let t4 = triangle(two_j4, two_j5, two_j3);
    let (t1, t2, t3, t4) = match (t1, t2, t3, t4) {
        (Some(a), Some(b), Some(c), Some(d)) => (a, b, c, d),
        _ => return 0.0,
    };
    let norm = (t1 * t2 * t3 * t4).sqrt();

    let f1 = (two_j1 + two_j2 + two_j3) / 2;
    let f2 = (two_j1 + two_j5 + two_j6) / 2;
    let f3 = (two_j4 + two_j2 + two_j6) / 2;
    let f4 = (two_j4 + two_j5 + two_j3) / 2;
    let g1 = (two_j1 + two_j2 + two_j4 + two_j5) / 2;
    let g2 = (two_j2 + two_j3 + two_j5 + two_j6) / 2;
    let g3 = (two_j3 + two_j1 + two_j6 + two_j4) / 2;

    let t_min = f1.max(f2).max(f3).max(f4);
    let t_max = g1.min(g2).min(g3);

    let mut sum = 0.0;
    for t in t_min..=t_max {
        let denom = fact(t - f1)
            * fact(t - f2)
            * fact(t - f3)
            * fact(t - f4)
            * fact(g1 - t)
            * fact(g2 - t)
            * fact(g3 - t);
        sum += parity(t) * fact(t + 1) / denom;
    }
    norm * sum
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn threej_known_values() {
        // (1 1 0; 0 0 0) = -1/sqrt(3)
        assert_abs_diff_eq!(wigner_3j(2, 2, 0, 0, 0, 0), -1.0 / 3.0_f64.sqrt(), epsilon = 1e-14);
        // (1 1 2; 1 -1 0) = 1/sqrt(30)
        assert_abs_diff_eq!(wigner_3j(2, 2, 4, 2, -2, 0), 1.0 / 30.0_f64.sqrt(), epsilon = 1e-14);
        // (3/2 1 1/2; -3/2 1 1/2) = 1/2
        assert_abs_diff_eq!(wigner_3j(3, 2, 1, -3, 2, 1), 0.5, epsilon = 1e-14);
        // odd sum with all m = 0 vanishes
        assert_abs_diff_eq!(wigner_3j(8, 2, 8, 0, 0, 0), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn threej_orthogonality() {
        // sum_{m1 m2} (2j3+1) (j1 j2 j3; m1 m2 m3)^2 = 1
        let (tj1, tj2, tj3, tm3) = (3, 2, 5, 1);
        let mut sum = 0.0;
        for tm1 in (-tj1..=tj1).step_by(2) {
            for tm2 in (-tj2..=tj2).step_by(2) {
                let w = wigner_3j(tj1, tj2, tj3, tm1, tm2, -tm3);
                sum += (tj3 + 1) as f64 * w * w;
            }
        }
        assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn sixj_known_values() {
        // {1 1 1; 1 1 1} = 1/6
        assert_abs_diff_eq!(wigner_6j(2, 2, 2, 2, 2, 2), 1.0 / 6.0, epsilon = 1e-14);
        // {1/2 1/2 1; 1/2 1/2 1} = 1/6
        assert_abs_diff_eq!(wigner_6j(1, 1, 2, 1, 1, 2), 1.0 / 6.0, epsilon = 1e-14);
        // one argument zero: {0 b b; d e e} = (-1)^(b+d+e)/sqrt((2b+1)(2e+1))
        assert_abs_diff_eq!(wigner_6j(0, 1, 1, 2, 1, 1), 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(wigner_6j(0, 1, 1, 0, 1, 1), -0.5, epsilon = 1e-14);
        // {3/2 5 7/2; 4 1/2 1}^2 = 1/36 (cesium D2 stretched hyperfine line)
        let w = wigner_6j(3, 10, 7, 8, 1, 2);
        assert_abs_diff_eq!(w * w, 1.0 / 36.0, epsilon = 1e-13);
    }

    #[test]
    fn sixj_orthogonality() {
        // sum_x (2x+1) {a b x; c d f}{a b x; c d g} = delta_fg / (2f+1)
        let (ta, tb, tc, td) = (3, 5, 3, 5);
        let (tf, tg) = (2, 2);
        let mut sum = 0.0;
        for tx in 0..=16 {
            sum += (tx + 1) as f64
                * wigner_6j(ta, tb, tx, tc, td, tf)
                * wigner_6j(ta, tb, tx, tc, td, tg);
        }
        assert_abs_diff_eq!(sum, 1.0 / (tf + 1) as f64, epsilon = 1e-12);
    }

    /// Defining contraction of four 3j symbols — a route through `wigner_3j`
    /// only, independent of the Racah single-sum inside `wigner_6j`.
    fn sixj_by_contraction(
        two_j1: i32,
        two_j2: i32,
        two_j3: i32,
        two_j4: i32,
        two_j5: i32,
        two_j6: i32,
    ) -> f64 {
        let mut total = 0.0;
        for two_m1 in (-two_j1..=two_j1).step_by(2) {
            for two_m2 in (-two_j2..=two_j2).step_by(2) {
                let two_m3 = -two_m1 - two_m2;
                if two_m3.abs() > two_j3 {
                    continue;
                }
                for two_m5 in (-two_j5..=two_j5).step_by(2) {
                    let two_m6 = two_m5 - two_m1;
                    let two_m4 = two_m6 - two_m2;
                    if two_m6.abs() > two_j6 || two_m4.abs() > two_j4 {
                        continue;
                    }
                    let expo = (two_j1 - two_m1)
                        + (two_j2 - two_m2)
                        + (two_j3 - two_m3)
                        + (two_j4 - two_m4)
                        + (two_j5 - two_m5)
                        + (two_j6 - two_m6);
                    debug_assert_eq!(expo % 2, 0);
                    let sign = if (expo / 2) % 2 == 0 { 1.0 } else { -1.0 };
                    total += sign
                        * wigner_3j(two_j1, two_j2, two_j3, -two_m1, -two_m2, -two_m3)
                        * wigner_3j(two_j1, two_j5, two_j6, two_m1, -two_m5, two_m6)
                        * wigner_3j(two_j4, two_j2, two_j6, two_m4, two_m2, -two_m6)
                        * wigner_3j(two_j4, two_j5, two_j3, -two_m4, two_m5, two_m3);
                }
            }
        }
        total
    }

    #[test]
    fn sixj_matches_four_threej_contraction() {
        let cases: [(i32, i32, i32, i32, i32, i32); 7] = [
            (1, 1, 2, 1, 1, 2),
            (2, 2, 2, 2, 2, 2),
            (4, 2, 4, 2, 4, 2),
            (3, 10, 7, 8, 1, 2), // {3/2 5 7/2; 4 1/2 1}: D2 hyperfine shape
            (8, 2, 8, 7, 7, 7),
            (3, 2, 5, 2, 3, 4),
            (6, 4, 2, 4, 6, 4),
        ];
        for &(a, b, c, d, e, f) in &cases {
            assert_abs_diff_eq!(
                wigner_6j(a, b, c, d, e, f),
                sixj_by_contraction(a, b, c, d, e, f),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn cg_stretched_is_unity() {
        assert_abs_diff_eq!(clebsch_gordan(2, 2, 1, 1, 3, 3), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(clebsch_gordan(8, 8, 2, 2, 10, 10), 1.0, epsilon = 1e-14);
    }
}
