use serde::{Deserialize, Serialize};
use statrs::function::beta::checked_beta_reg;

use super::ValidatedLog;
use crate::error::{Error, Result};

/// Welch's unequal-variance two-sample t-test, two-tailed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchTest {
    pub t: f64,
    pub df: f64,
    pub p: f64,
}

fn mean_and_sample_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let ss: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
    (mean, ss / (n - 1.0))
}

/// Returns `None` when either sample has fewer than two observations.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Option<WelchTest> {
    if a.len() < 2 || b.len() < 2 {
        return None;
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (ma, va) = mean_and_sample_var(a);
    let (mb, vb) = mean_and_sample_var(b);
    let (sa, sb) = (va / na, vb / nb);
    let se2 = sa + sb;
    let diff = ma - mb;

    if se2 == 0.0 {
        // both samples constant: the test degenerates to an exact comparison
        let df = na + nb - 2.0;
        return Some(if diff == 0.0 {
            WelchTest { t: 0.0, df, p: 1.0 }
        } else {
            WelchTest {
                t: diff.signum() * f64::INFINITY,
                df,
                p: 0.0,
            }
        });
    }

    let t = diff / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    // two-tailed p = I_{df/(df+t^2)}(df/2, 1/2)
    let x = df / (df + t * t);
    let p = checked_beta_reg(df / 2.0, 0.5, x).ok()?.clamp(0.0, 1.0);
    Some(WelchTest { t, df, p })
}

/// Descriptive statistics of a validated log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogSummary {
    pub total_annotations: usize,
    pub total_users: usize,
    pub logged_in_users: usize,
    pub anonymous_users: usize,
    pub top_k: usize,
    pub top_k_annotations: usize,
    pub top_k_share: f64,
    /// Mean per-user annotation count; `None` when the group is empty.
    pub mean_annotations_logged_in: Option<f64>,
    pub mean_annotations_anonymous: Option<f64>,
    /// Welch test of logged-in versus anonymous per-user counts; `None`
    /// when either group has fewer than two users.
    pub welch_t: Option<f64>,
    pub welch_df: Option<f64>,
    pub welch_p: Option<f64>,
}

pub fn descriptive_stats(log: &ValidatedLog, k: usize) -> Result<LogSummary> {
    if log.is_empty() {
        return Err(Error::EmptyLog);
    }
    if k > log.user_count() {
        return Err(Error::invalid(format!(
            "top-k of {k} exceeds the {} users in the log",
            log.user_count()
        )));
    }

    let mut logged_in = Vec::new();
    let mut anonymous = Vec::new();
    let mut counts = Vec::with_capacity(log.user_count());
    for user in log.users() {
        let n = user.events.len();
        counts.push(n);
        if user.logged_in() {
            logged_in.push(n as f64);
        } else {
            anonymous.push(n as f64);
        }
    }
    counts.sort_unstable_by(|a, b| b.cmp(a));
    let top_k_annotations: usize = counts[..k].iter().sum();
    let total = log.event_count();

    let mean = |xs: &[f64]| (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64);
    let welch = welch_t_test(&logged_in, &anonymous);

    Ok(LogSummary {
        total_annotations: total,
        total_users: log.user_count(),
        logged_in_users: logged_in.len(),
        anonymous_users: anonymous.len(),
        top_k: k,
        top_k_annotations,
        top_k_share: top_k_annotations as f64 / total as f64,
        mean_annotations_logged_in: mean(&logged_in),
        mean_annotations_anonymous: mean(&anonymous),
        welch_t: welch.map(|w| w.t),
        welch_df: welch.map(|w| w.df),
        welch_p: welch.map(|w| w.p),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{validate_log, AnnotationEvent};
    use chrono::{TimeZone, Utc};

    fn log_with_counts(logged: &[usize], anon: &[usize]) -> ValidatedLog {
        let mut events = Vec::new();
        for (flag, counts) in [(true, logged), (false, anon)] {
            for (u, &n) in counts.iter().enumerate() {
                for k in 0..n {
                    let t = Utc.timestamp_opt(1_600_000_000 + k as i64 * 10, 0).unwrap();
                    events.push(AnnotationEvent::new(format!("{flag}-{u}"), flag, t));
                }
            }
        }
        validate_log(events)
    }

    #[test]
    fn welch_matches_reference_values() {
        // reference: scipy.stats.ttest_ind([4, 6], [1, 3], equal_var=False)
        let w = welch_t_test(&[4.0, 6.0], &[1.0, 3.0]).unwrap();
        assert!((w.t - 2.1213203435596424).abs() < 1e-12);
        assert!((w.df - 2.0).abs() < 1e-12);
        assert!((w.p - 0.1679497056621563).abs() < 1e-6);

        // reference: scipy.stats.ttest_ind([1,2,3,4,5,9], [2,2,3,1], equal_var=False)
        let w = welch_t_test(&[1.0, 2.0, 3.0, 4.0, 5.0, 9.0], &[2.0, 2.0, 3.0, 1.0]).unwrap();
        assert!((w.t - 1.6329931618554523).abs() < 1e-12, "{w:?}");
        assert!((w.df - 6.167512690355331).abs() < 1e-9, "{w:?}");
        assert!((w.p - 0.15224573467134203).abs() < 1e-6, "{w:?}");
    }

    #[test]
    fn welch_is_antisymmetric() {
        let a = [3.0, 7.0, 1.0, 12.0];
        let b = [2.0, 2.5, 9.0];
        let ab = welch_t_test(&a, &b).unwrap();
        let ba = welch_t_test(&b, &a).unwrap();
        assert_eq!(ab.t, -ba.t);
        assert_eq!(ab.p, ba.p);
    }

    #[test]
    fn identical_groups_give_zero_t() {
        let s = log_with_counts(&[3, 5, 4], &[3, 5, 4]);
        let summary = descriptive_stats(&s, 1).unwrap();
        assert_eq!(summary.welch_t, Some(0.0));
        assert!((summary.welch_p.unwrap() - 1.0).abs() < 1e-12);

        let s = log_with_counts(&[2, 2], &[2, 2]);
        let summary = descriptive_stats(&s, 1).unwrap();
        assert_eq!(summary.welch_t, Some(0.0));
        assert_eq!(summary.welch_p, Some(1.0));
    }

    #[test]
    fn group_means_and_top_k() {
        let s = log_with_counts(&[4, 6], &[1, 3]);
        let summary = descriptive_stats(&s, 1).unwrap();
        assert_eq!(summary.mean_annotations_logged_in, Some(5.0));
        assert_eq!(summary.mean_annotations_anonymous, Some(2.0));
        assert_eq!(summary.top_k_share, 6.0 / 14.0);
        assert_eq!(summary.total_annotations, 14);
    }

    #[test]
    fn equal_users_share_is_k_over_n() {
        let s = log_with_counts(&[3, 3, 3], &[3, 3]);
        let summary = descriptive_stats(&s, 2).unwrap();
        assert_eq!(summary.top_k_share, 2.0 / 5.0);
    }

    #[test]
    fn small_groups_leave_test_undefined() {
        let s = log_with_counts(&[4, 6], &[1]);
        let summary = descriptive_stats(&s, 1).unwrap();
        assert_eq!(summary.welch_t, None);
        assert_eq!(summary.welch_p, None);
    }

    #[test]
    fn k_beyond_users_is_an_error() {
        let s = log_with_counts(&[4], &[1]);
        assert!(descriptive_stats(&s, 3).is_err());
        assert!(descriptive_stats(&ValidatedLog::default(), 0).is_err());
    }
}
