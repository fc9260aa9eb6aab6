//! Sliding (input, target) windows over the hour axis and their split into
//! training, validation and test sets.

use std::ops::Range;

/// Window starts within one contiguous segment: `T` input rows followed by
/// `τ` target rows, all inside the segment.
pub fn window_starts(segment: Range<usize>, encoder_steps: usize, decoder_steps: usize) -> Vec<usize> {
    let span = encoder_steps + decoder_steps;
    if segment.len() < span {
        return Vec::new();
    }
    (segment.start..=segment.end - span).collect()
}

/// Months used for each role.
#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub train_months: Vec<u32>,
    pub test_months: Vec<u32>,
    /// Chronological tail of the training windows held out for validation.
    pub validation_fraction: f64,
}

impl Default for Split {
    fn default() -> Self {
        Split {
            train_months: vec![201906, 201907, 201908],
            test_months: vec![201910],
            validation_fraction: 0.2,
        }
    }
}

/// Window start rows per role, each in chronological order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WindowPlan {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
    /// Months that were too short to hold a single window.
    pub short_months: Vec<u32>,
}

/// Enumerate windows segment by segment; a window never spans two segments.
/// Segments in months that are neither training nor test are ignored.
pub fn assemble_windows(
    segments: &[(u32, Range<usize>)],
    encoder_steps: usize,
    decoder_steps: usize,
    split: &Split,
) -> WindowPlan {
    let mut plan = WindowPlan::default();
    let mut train = Vec::new();
    for (month, range) in segments {
        let is_train = split.train_months.contains(month);
        let is_test = split.test_months.contains(month);
        if !is_train && !is_test {
            continue;
        }
        let starts = window_starts(range.clone(), encoder_steps, decoder_steps);
        if starts.is_empty() {
            log::warn!(
                "segment of {} hours in {} is shorter than {} and yields no window",
                range.len(),
                super::format_month(*month),
                encoder_steps + decoder_steps
            );
            if !plan.short_months.contains(month) {
                plan.short_months.push(*month);
            }
        }
        if is_train {
            train.extend(starts);
        } else {
            plan.test.extend(starts);
        }
    }
    let n_val = (train.len() as f64 * split.validation_fraction).floor() as usize;
    plan.validation = train.split_off(train.len() - n_val);
    plan.train = train;
    plan
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_counts() {
        assert_eq!(window_starts(0..14, 12, 1), vec![0, 1]);
        assert_eq!(window_starts(5..18, 12, 1), vec![5]);
        assert!(window_starts(0..12, 12, 1).is_empty());
    }

    #[test]
    fn split_by_month_with_validation_tail() {
        let segs = vec![(201906, 0..20), (201909, 20..40), (201910, 40..55)];
        let split = Split {
            train_months: vec![201906],
            test_months: vec![201910],
            validation_fraction: 0.25,
        };
        let plan = assemble_windows(&segs, 12, 1, &split);
        assert_eq!(plan.train, vec![0, 1, 2, 3, 4, 5]);
        assert_eq!(plan.validation, vec![6, 7]);
        assert_eq!(plan.test, vec![40, 41, 42]);
    }
}
