//! Kaplan-Meier product-limit estimator.

use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KmStep {
    pub time: f64,
    pub at_risk: usize,
    pub events: usize,
    pub censored: usize,
    /// Survival just after `time`.
    pub survival: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KaplanMeier {
    pub steps: Vec<KmStep>,
}

impl KaplanMeier {
    /// `event[i]` marks an observed event at `time[i]`; otherwise censored.
    pub fn fit(time: &[f64], event: &[bool]) -> KaplanMeier {
        let mut order: Vec<usize> = (0..time.len()).collect();
        order.sort_by(|&a, &b| time[a].total_cmp(&time[b]));
        let mut at_risk = time.len();
        let mut surv = 1.0;
        let mut steps = Vec::new();
        let mut i = 0;
        while i < order.len() {
            let t = time[order[i]];
            let (mut d, mut c) = (0, 0);
            while i < order.len() && time[order[i]] == t {
                if event[order[i]] {
                    d += 1;
                } else {
                    c += 1;
                }
                i += 1;
            }
            if d > 0 {
                surv *= 1.0 - d as f64 / at_risk as f64;
            }
            steps.push(KmStep {
                time: t,
                at_risk,
                events: d,
                censored: c,
                survival: surv,
            });
            at_risk -= d + c;
        }
        KaplanMeier { steps }
    }

    /// Survival of the censoring distribution (censorings treated as events).
    pub fn censoring(time: &[f64], event: &[bool]) -> KaplanMeier {
        let flipped: Vec<bool> = event.iter().map(|e| !e).collect();
        KaplanMeier::fit(time, &flipped)
    }

    /// S(t), right-continuous.
    pub fn survival_at(&self, t: f64) -> f64 {
        let idx = self.steps.partition_point(|s| s.time <= t);
        if idx == 0 {
            1.0
        } else {
            self.steps[idx - 1].survival
        }
    }

    /// S(t-), the left limit.
    pub fn survival_before(&self, t: f64) -> f64 {
        let idx = self.steps.partition_point(|s| s.time < t);
        if idx == 0 {
            1.0
        } else {
            self.steps[idx - 1].survival
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_example() {
        // times 1,2+,3,3,4+ ; S(1)=4/5, S(3)=4/5*1/3
        let km = KaplanMeier::fit(&[1.0, 2.0, 3.0, 3.0, 4.0], &[true, false, true, true, false]);
        assert!((km.survival_at(1.0) - 0.8).abs() < 1e-15);
        assert!((km.survival_at(2.5) - 0.8).abs() < 1e-15);
        assert!((km.survival_at(3.0) - 0.8 / 3.0).abs() < 1e-15);
        assert_eq!(km.survival_before(1.0), 1.0);
        assert!((km.survival_before(3.0) - 0.8).abs() < 1e-15);
        assert_eq!(km.survival_at(0.5), 1.0);
    }

    #[test]
    fn censoring_distribution() {
        let km = KaplanMeier::censoring(&[1.0, 2.0, 3.0], &[true, false, true]);
        assert_eq!(km.survival_at(1.5), 1.0);
        assert!((km.survival_at(2.0) - 0.5).abs() < 1e-15);
    }
}
