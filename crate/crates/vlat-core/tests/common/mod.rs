//! Shared test oracles and generators. Everything here recomputes results
//! from first principles, independent of the library's own code paths.

#![allow(dead_code)]

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vlat_core::corpus::{CorpusBuilder, Post};
use vlat_core::Corpus;

// --- agreement oracles ----------------------------------------------------

/// Cohen's kappa by direct pair counting: observed agreement over aligned
/// pairs, chance agreement over all n^2 cross pairs.
pub fn kappa_pair_counting_oracle(truth: &[usize], pred: &[usize]) -> f64 {
    let n = truth.len();
    let observed = truth.iter().zip(pred).filter(|(a, b)| a == b).count() as f64 / n as f64;
    let mut cross = 0usize;
    for &a in truth {
        for &b in pred {
            if a == b {
                cross += 1;
            }
        }
    }
    let chance = cross as f64 / (n * n) as f64;
    (observed - chance) / (1.0 - chance)
}

/// Weighted and macro F1 by definitional per-class counting over the label
/// pairs, without building a confusion matrix.
pub fn f1_definitional_oracle(truth: &[usize], pred: &[usize], classes: usize) -> (f64, f64) {
    let n = truth.len() as f64;
    let mut weighted = 0.0;
    let mut macro_sum = 0.0;
    let mut macro_classes = 0usize;
    for class in 0..classes {
        let tp = truth
            .iter()
            .zip(pred)
            .filter(|(&a, &b)| a == class && b == class)
            .count() as f64;
        let false_positive = truth
            .iter()
            .zip(pred)
            .filter(|(&a, &b)| a != class && b == class)
            .count() as f64;
        let false_negative = truth
            .iter()
            .zip(pred)
            .filter(|(&a, &b)| a == class && b != class)
            .count() as f64;
        let support = tp + false_negative;
        if support == 0.0 {
            continue;
        }
        let precision = if tp + false_positive > 0.0 {
            tp / (tp + false_positive)
        } else {
            0.0
        };
        let recall = tp / support;
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        weighted += f1 * support / n;
        macro_sum += f1;
        macro_classes += 1;
    }
    (weighted, macro_sum / macro_classes as f64)
}

// --- OLS oracles ------------------------------------------------------------

/// Slope and intercept from the raw 2x2 normal equations via Cramer's rule.
pub fn normal_equations_oracle(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let sum_x: f64 = points.iter().map(|p| p.0).sum();
    let sum_y: f64 = points.iter().map(|p| p.1).sum();
    let sum_xx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sum_xy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    let det = n * sum_xx - sum_x * sum_x;
    let beta = (n * sum_xy - sum_x * sum_y) / det;
    let intercept = (sum_y * sum_xx - sum_x * sum_xy) / det;
    (beta, intercept)
}

/// Two-sided slope p-value with the t statistic recomputed from the oracle
/// coefficients and the tail probability obtained by numerically integrating
/// the t density (no closed-form CDF involved).
pub fn p_value_oracle(points: &[(f64, f64)]) -> f64 {
    let n = points.len();
    let (beta, intercept) = normal_equations_oracle(points);
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n as f64;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let sse: f64 = points
        .iter()
        .map(|p| {
            let r = p.1 - intercept - beta * p.0;
            r * r
        })
        .sum();
    let df = (n - 2) as f64;
    if sse <= 0.0 {
        return if beta == 0.0 { 1.0 } else { 0.0 };
    }
    let se = (sse / df / sxx).sqrt();
    let t = beta / se;
    2.0 * student_t_tail(t.abs(), df)
}

/// P(T > t) for Student's t with `df` degrees of freedom, by quadrature.
///
/// Substituting x = sqrt(df) tan(theta) turns the tail integral into
/// C sqrt(df) times the integral of cos^(df-1) over [atan(t/sqrt(df)), pi/2],
/// a smooth bounded integrand that composite Simpson handles to well below
/// the 1e-6 target.
pub fn student_t_tail(t: f64, df: f64) -> f64 {
    let theta_t = (t / df.sqrt()).atan();
    let ln_c = ln_gamma((df + 1.0) / 2.0) - 0.5 * (df * PI).ln() - ln_gamma(df / 2.0);
    let integral = simpson(|theta| theta.cos().powf(df - 1.0), theta_t, PI / 2.0, 16_384);
    ln_c.exp() * df.sqrt() * integral
}

/// Lanczos approximation (g = 7), accurate to ~1e-13 relative error.
fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x)
    } else {
        let x = x - 1.0;
        let t = x + 7.5;
        let mut series = COEF[0];
        for (i, &c) in COEF.iter().enumerate().skip(1) {
            series += c / (x + i as f64);
        }
        0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + series.ln()
    }
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
    let h = (b - a) / intervals as f64;
    let mut sum = f(a) + f(b);
    for i in 1..intervals {
        let weight = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += weight * f(a + i as f64 * h);
    }
    sum * h / 3.0
}

// --- session oracle ---------------------------------------------------------

/// Check the session invariants by brute-force gap scanning: sessions
/// partition the timeline in order, all intra-session gaps are below the
/// threshold, all inter-session gaps reach it.
pub fn check_sessions_brute_force(
    times: &[i64],
    sessions: &[vlat_core::Session],
    threshold: i64,
) -> Result<(), String> {
    let flattened: Vec<i64> = sessions
        .iter()
        .flat_map(|s| s.posts.iter().map(|p| p.created_at))
        .collect();
    if flattened != times {
        return Err("sessions do not partition the timeline in order".into());
    }
    for session in sessions {
        for pair in session.posts.windows(2) {
            if pair[1].created_at - pair[0].created_at >= threshold {
                return Err(format!(
                    "intra-session gap {} >= threshold {threshold}",
                    pair[1].created_at - pair[0].created_at
                ));
            }
        }
        if session.start != session.posts.first().map(|p| p.created_at).unwrap_or(0)
            || session.end != session.posts.last().map(|p| p.created_at).unwrap_or(0)
        {
            return Err("session start/end do not match its posts".into());
        }
    }
    for pair in sessions.windows(2) {
        if pair[1].start - pair[0].end < threshold {
            return Err(format!(
                "inter-session gap {} < threshold {threshold}",
                pair[1].start - pair[0].end
            ));
        }
    }
    Ok(())
}

// --- synthetic corpus -------------------------------------------------------

/// Trigger phrases understood by the default mock lexicon, one per violent
/// label, plus neutral fillers.
const VIOLENT_SNIPPETS: [(&str, &str); 6] = [
    ("someone should beat him, really beat him", "EV-D"),
    ("every one of them deserves the rope", "EV-G"),
    ("i want to end it tonight", "EV-S"),
    ("he is due for a nasty accident", "IV-D"),
    ("they will see what's coming to them", "IV-G"),
    ("things would be easier without me around", "IV-S"),
];

const NEUTRAL_SNIPPETS: [&str; 4] = [
    "started learning guitar from online lessons",
    "the cafeteria food was actually decent today",
    "rewatched that series again over the weekend",
    "thinking about picking up running in the mornings",
];

/// Deterministic synthetic corpus: `n` posts spread over `users` users and
/// two years, with roughly `violent_share` of posts carrying a trigger
/// phrase from the mock lexicon.
pub fn synthetic_corpus(n: usize, users: usize, violent_share: f64, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut builder = CorpusBuilder::new();
    for i in 0..n {
        let violent = rng.gen::<f64>() < violent_share;
        let text = if violent {
            let (snippet, _) = VIOLENT_SNIPPETS[rng.gen_range(0..VIOLENT_SNIPPETS.len())];
            format!("post {i}: {snippet}")
        } else {
            format!(
                "post {i}: {}",
                NEUTRAL_SNIPPETS[rng.gen_range(0..NEUTRAL_SNIPPETS.len())]
            )
        };
        builder.push(Post {
            post_id: format!("p{i:06}"),
            user_id: format!("u{:04}", rng.gen_range(0..users)),
            thread_id: format!("t{:04}", rng.gen_range(0..users * 2)),
            created_at: 1_500_000_000 + rng.gen_range(0..63_115_200),
            text,
        });
    }
    builder.finish().0
}
