//! Tests of the Min bound: is the grand problem's default share above the
//! smallest default share among the other problems?
//!
//! The finite-sample test compares each small problem with the grand problem
//! among subjects who did not see it (Fisher's exact test, Bonferroni
//! adjusted). The asymptotic test bootstraps the recentred statistic
//! `p̂(X) − min p̂(A)` by subject, after dropping problems whose default share
//! is clearly above the grand one.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{leave_out_grand_frequency, resample_counts, tally, CellCount, PanelDataset};
use crate::rng;

/// One-sided Fisher exact p-value for `p(A) < p(X)`: the probability, given
/// both margins, of an A-sample default count at most `a_defaults`.
pub fn fisher_one_sided(a_defaults: u64, a_shown: u64, x_defaults: u64, x_shown: u64) -> Result<f64> {
    if a_shown == 0 || x_shown == 0 {
        return Err(Error::validation("fisher test needs both samples nonempty"));
    }
    if a_defaults > a_shown || x_defaults > x_shown {
        return Err(Error::validation("default count exceeds shown count"));
    }
    let total = a_shown + x_shown;
    let defaults = a_defaults + x_defaults;
    let draws = a_shown;
    let lo = (draws + defaults).saturating_sub(total);
    let hi = draws.min(defaults);
    // hypergeometric weights relative to the mode, by the ratio recurrence
    let mode = (((draws + 1) as f64 * (defaults + 1) as f64) / (total + 2) as f64).floor() as u64;
    let mode = mode.clamp(lo, hi);
    let ratio_up = |x: u64| -> f64 {
        // P(x+1)/P(x)
        ((defaults - x) as f64 * (draws - x) as f64) / ((x + 1) as f64 * (x + 1 + total - defaults - draws) as f64)
    };
    let (mut below, mut sum) = (0.0f64, 0.0f64);
    let mut t = 1.0f64;
    let mut x = mode;
    loop {
        sum += t;
        if x <= a_defaults {
            below += t;
        }
        if x == hi {
            break;
        }
        t *= ratio_up(x);
        x += 1;
        if t == 0.0 {
            break;
        }
    }
    let mut t = 1.0f64;
    let mut x = mode;
    while x > lo {
        t /= ratio_up(x - 1);
        x -= 1;
        if t == 0.0 {
            break;
        }
        sum += t;
        if x <= a_defaults {
            below += t;
        }
    }
    Ok((below / sum).min(1.0))
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Method {
    Finite,
    Asymptotic,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProblemPValue {
    pub problem: String,
    pub p_value: f64,
    pub adjusted: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MinTestReport {
    pub method: Method,
    /// `p̂(X) − min p̂(A)`.
    pub statistic: f64,
    pub p_value: f64,
    /// Finite method only.
    pub per_problem: Vec<ProblemPValue>,
    /// Bonferroni multiplier actually used (finite method).
    pub multiplier: Option<usize>,
    /// Problems retained by moment selection (asymptotic method).
    pub retained: Vec<String>,
    pub alpha_n: Option<f64>,
    pub replications: Option<usize>,
    pub seed: Option<u64>,
    /// Problem-replication pairs with an empty bootstrap cell.
    pub empty_bootstrap_cells: usize,
    pub warnings: Vec<String>,
}

fn statistic(counts: &[CellCount], grand: usize) -> Result<f64> {
    if counts[grand].shown == 0 {
        return Err(Error::validation("grand problem has no observations"));
    }
    let min = counts[..grand]
        .iter()
        .filter(|c| c.shown > 0)
        .map(|c| c.passive_frequency())
        .fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return Err(Error::validation("no small problem has observations"));
    }
    Ok(counts[grand].passive_frequency() - min)
}

/// Fisher test of every small problem against the leave-out grand sample,
/// Bonferroni adjusted over the problems that could be tested.
pub fn finite_min_test(panel: &PanelDataset) -> Result<MinTestReport> {
    let design = panel.design();
    let grand = design.grand_index();
    let counts = tally(panel);
    let mut warnings = Vec::new();
    let mut raw = Vec::new();
    for a in design.small_indices() {
        let c = counts[a];
        if c.shown == 0 {
            warnings.push(format!(
                "problem {} has no observations; excluded",
                design.problem_key(a)
            ));
            continue;
        }
        match leave_out_grand_frequency(panel, a) {
            Ok((xd, xs)) => raw.push((a, fisher_one_sided(c.default, c.shown, xd, xs)?)),
            Err(Error::EmptyLeaveOut { problem }) => {
                warnings.push(format!("empty leave-out cell for problem {problem}; excluded"));
            }
            Err(e) => return Err(e),
        }
    }
    if raw.is_empty() {
        return Err(Error::validation("no small problem could be tested"));
    }
    let m = raw.len();
    let per_problem: Vec<ProblemPValue> = raw
        .iter()
        .map(|&(a, p)| ProblemPValue {
            problem: design.problem_key(a),
            p_value: p,
            adjusted: (m as f64 * p).min(1.0),
        })
        .collect();
    let p_value = per_problem.iter().map(|p| p.adjusted).fold(1.0, f64::min);
    Ok(MinTestReport {
        method: Method::Finite,
        statistic: statistic(&counts, grand)?,
        p_value,
        per_problem,
        multiplier: Some(m),
        retained: Vec::new(),
        alpha_n: None,
        replications: None,
        seed: None,
        empty_bootstrap_cells: 0,
        warnings,
    })
}

/// Pre-test level `1/ln n`.
pub fn alpha_n(n: usize) -> f64 {
    1.0 / (n as f64).ln()
}

/// Empirical `level`-quantile (smallest order statistic with at least that
/// share of the sample at or below it).
fn quantile(values: &mut [f64], level: f64) -> f64 {
    values.sort_by(f64::total_cmp);
    let k = ((level * values.len() as f64).ceil() as usize).clamp(1, values.len());
    values[k - 1]
}

/// Recentred, subject-clustered bootstrap of the Min statistic with moment
/// selection at level `1/ln n`.
pub fn asymptotic_min_test(panel: &PanelDataset, replications: usize, seed: u64) -> Result<MinTestReport> {
    let n = panel.n_subjects();
    if n < 2 {
        return Err(Error::validation("asymptotic test needs at least two subjects"));
    }
    if replications == 0 {
        return Err(Error::validation("bootstrap needs at least one replication"));
    }
    let design = panel.design();
    let grand = design.grand_index();
    let counts = tally(panel);
    let t = statistic(&counts, grand)?;
    let p_hat: Vec<Option<f64>> = counts
        .iter()
        .map(|c| (c.shown > 0).then(|| c.passive_frequency()))
        .collect();
    let mut warnings = Vec::new();
    for a in design.small_indices() {
        if p_hat[a].is_none() {
            warnings.push(format!(
                "problem {} has no observations; excluded",
                design.problem_key(a)
            ));
        }
    }

    // recentred deviations p̂* − p̂, NaN for empty cells
    let deviations: Vec<Vec<f64>> = (0..replications)
        .into_par_iter()
        .map(|b| {
            let mut r = rng::replication(seed, b);
            let mut boot = vec![CellCount::default(); counts.len()];
            resample_counts(panel, &mut r, &mut boot);
            boot.iter()
                .zip(&p_hat)
                .map(|(c, p)| match p {
                    Some(p) if c.shown > 0 => c.passive_frequency() - p,
                    _ => f64::NAN,
                })
                .collect()
        })
        .collect();
    let empty_bootstrap_cells = deviations
        .iter()
        .map(|d| d.iter().zip(&p_hat).filter(|(v, p)| v.is_nan() && p.is_some()).count())
        .sum();

    let alpha = alpha_n(n);
    let px = p_hat[grand].expect("grand observed");
    let mut retained = Vec::new();
    for a in design.small_indices() {
        let Some(pa) = p_hat[a] else { continue };
        let keep = if pa <= px {
            true
        } else {
            let mut diff: Vec<f64> = deviations
                .iter()
                .map(|d| d[a] - d[grand])
                .filter(|v| !v.is_nan())
                .collect();
            if diff.is_empty() {
                true
            } else {
                pa - px <= quantile(&mut diff, 1.0 - alpha)
            }
        };
        if keep {
            retained.push(a);
        }
    }

    let p_value = if retained.is_empty() {
        warnings.push("no problem retained by moment selection; p-value set to 1".into());
        1.0
    } else {
        let mut valid = 0usize;
        let mut exceed = 0usize;
        for d in &deviations {
            if d[grand].is_nan() {
                continue;
            }
            let min = retained
                .iter()
                .map(|&a| d[a])
                .filter(|v| !v.is_nan())
                .fold(f64::INFINITY, f64::min);
            if !min.is_finite() {
                continue;
            }
            valid += 1;
            if d[grand] - min >= t {
                exceed += 1;
            }
        }
        if valid == 0 {
            return Err(Error::validation("every bootstrap replication had empty cells"));
        }
        exceed as f64 / valid as f64
    };

    Ok(MinTestReport {
        method: Method::Asymptotic,
        statistic: t,
        p_value,
        per_problem: Vec::new(),
        multiplier: None,
        retained: retained.iter().map(|&a| design.problem_key(a)).collect(),
        alpha_n: Some(alpha),
        replications: Some(replications),
        seed: Some(seed),
        empty_bootstrap_cells,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{read_panel, Universe};
    use proptest::prelude::*;

    fn binom(n: u64, k: u64) -> u128 {
        if k > n {
            return 0;
        }
        let k = k.min(n - k);
        let mut r: u128 = 1;
        for i in 0..k {
            r = r * (n - i) as u128 / (i + 1) as u128;
        }
        r
    }

    fn brute_force(ad: u64, a_shown: u64, xd: u64, x_shown: u64) -> f64 {
        let total = a_shown + x_shown;
        let k = ad + xd;
        let mut below = 0u128;
        for x in 0..=ad {
            below += binom(k, x) * binom(total - k, a_shown - x.min(a_shown));
        }
        below as f64 / binom(total, a_shown) as f64
    }

    #[test]
    fn textbook_table() {
        let p = fisher_one_sided(1, 5, 4, 5).unwrap();
        assert!((p - 26.0 / 252.0).abs() < 1e-15);
        assert!(fisher_one_sided(1, 2, 1, 2).unwrap() >= 0.5);
        assert_eq!(fisher_one_sided(5, 5, 0, 7).unwrap(), 1.0);
        assert!(fisher_one_sided(1, 0, 1, 2).is_err());
        assert!(fisher_one_sided(3, 2, 1, 2).is_err());
    }

    #[test]
    fn matches_enumeration_for_margins_up_to_fifty() {
        for a_shown in 1..=50u64 {
            for x_shown in (1..=50u64).step_by(3) {
                for ad in 0..=a_shown {
                    for xd in (0..=x_shown).step_by(1 + (x_shown as usize) / 5) {
                        let got = fisher_one_sided(ad, a_shown, xd, x_shown).unwrap();
                        let want = brute_force(ad, a_shown, xd, x_shown);
                        assert!(
                            (got - want).abs() <= 1e-12 * want.max(1e-300) + 1e-15,
                            "{ad}/{a_shown} {xd}/{x_shown}: {got} vs {want}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn large_tables_are_finite() {
        let p = fisher_one_sided(18, 201, 409, 1832).unwrap();
        // reference value from an independent implementation
        assert!((p / 1.4058573093390444e-06 - 1.0).abs() < 1e-9);
        let q = fisher_one_sided(199, 204, 300, 1600).unwrap();
        assert!(q > 0.99);
    }

    fn panel(lines: &[String]) -> PanelDataset {
        let mut text = vec!["subject_id,choice_set,chose_default".to_string()];
        text.extend_from_slice(lines);
        read_panel(text.join("\n").as_bytes(), Some(&Universe::numbered(2).unwrap())).unwrap()
    }

    /// Subjects alternate between the two singletons; defaults by rule.
    fn two_problem_panel(n: usize, small: impl Fn(usize) -> bool, grand: impl Fn(usize) -> bool) -> PanelDataset {
        let mut lines = Vec::new();
        for s in 0..n {
            let set = if s % 2 == 0 { "1" } else { "2" };
            lines.push(format!("s{s},{set},{}", u8::from(small(s))));
            lines.push(format!("s{s},ALL,{}", u8::from(grand(s))));
        }
        panel(&lines)
    }

    #[test]
    fn zero_grand_default_share_gives_p_one() {
        let p = two_problem_panel(20, |s| s % 3 == 0, |_| false);
        let r = finite_min_test(&p).unwrap();
        assert_eq!(r.p_value, 1.0);
        assert_eq!(r.multiplier, Some(2));
    }

    #[test]
    fn overload_is_detected() {
        // small sets almost never default, the grand set mostly does
        let p = two_problem_panel(200, |s| s % 10 == 0, |s| s % 10 != 0);
        let f = finite_min_test(&p).unwrap();
        assert!(f.p_value < 1e-6);
        let a = asymptotic_min_test(&p, 200, 4).unwrap();
        assert_eq!(a.p_value, 0.0);
        assert_eq!(a.retained.len(), 2);
    }

    #[test]
    fn empty_leave_out_reduces_the_multiplier() {
        // everyone with a grand record also saw problem 1
        let mut lines = Vec::new();
        for s in 0..6 {
            lines.push(format!("s{s},1,{}", s % 2));
            lines.push(format!("s{s},ALL,1"));
        }
        lines.push("t,2,0".into());
        let r = finite_min_test(&panel(&lines)).unwrap();
        assert_eq!(r.multiplier, Some(1));
        assert_eq!(r.warnings.len(), 1);
    }

    #[test]
    fn asymptotic_is_deterministic() {
        let p = two_problem_panel(60, |s| s % 3 == 0, |s| s % 4 == 0);
        let a = asymptotic_min_test(&p, 300, 8).unwrap();
        let b = asymptotic_min_test(&p, 300, 8).unwrap();
        assert_eq!(a, b);
        assert!((0.0..=1.0).contains(&a.p_value));
        assert!((a.alpha_n.unwrap() - 1.0 / 60f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn selection_keeps_problems_below_the_grand_share() {
        // problem 1 far above the grand share, problem 2 below it
        let p = two_problem_panel(400, |s| s % 2 == 0 || s % 5 == 1, |s| s % 3 == 0);
        let r = asymptotic_min_test(&p, 400, 2).unwrap();
        assert_eq!(r.retained, vec!["2".to_string()]);
    }

    #[test]
    fn single_small_problem() {
        let mut lines = Vec::new();
        for s in 0..50 {
            lines.push(format!("s{s},1,{}", u8::from(s % 2 == 0)));
            lines.push(format!("s{s},ALL,{}", u8::from(s % 5 == 0)));
        }
        let mut text = vec!["subject_id,choice_set,chose_default".to_string()];
        text.extend(lines);
        let p = read_panel(text.join("\n").as_bytes(), Some(&Universe::numbered(2).unwrap())).unwrap();
        let r = asymptotic_min_test(&p, 200, 1).unwrap();
        assert!(r.statistic < 0.0);
        assert!(r.p_value > 0.5);
    }

    proptest! {
        #[test]
        fn finite_p_value_ignores_record_order(rows in proptest::collection::vec((0usize..3, any::<bool>(), any::<bool>()), 4..40)) {
            let sets = ["1", "2", "1-2"];
            let mk = |reverse: bool| {
                let mut lines = Vec::new();
                for (s, (p, d, g)) in rows.iter().enumerate() {
                    lines.push(format!("s{s},{},{}", sets[*p], u8::from(*d)));
                    lines.push(format!("s{s},ALL,{}", u8::from(*g)));
                }
                if reverse {
                    lines.reverse();
                }
                let mut text = vec!["subject_id,choice_set,chose_default".to_string()];
                text.extend(lines);
                read_panel(text.join("\n").as_bytes(), Some(&Universe::numbered(3).unwrap())).and_then(|p| finite_min_test(&p))
            };
            match (mk(false), mk(true)) {
                (Ok(a), Ok(b)) => prop_assert_eq!(a.p_value, b.p_value),
                (Err(_), Err(_)) => {}
                _ => prop_assert!(false, "order changed the outcome"),
            }
        }

        #[test]
        fn fisher_is_a_probability(ad in 0u64..300, extra_a in 0u64..300, xd in 0u64..300, extra_x in 0u64..300) {
            let p = fisher_one_sided(ad, ad + extra_a + 1, xd, xd + extra_x + 1).unwrap();
            prop_assert!((0.0..=1.0).contains(&p));
        }
    }
}
