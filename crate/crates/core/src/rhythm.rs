//! Daily movement-rhythm distributions and their consistency over time.
//!
//! A day's rhythm is the normalized distribution of step counts over a
//! small number of contiguous day segments (default: night, morning,
//! afternoon, evening). Consistency is the inverse EMD between a day's
//! rhythm and either the next day's rhythm (short-term), the monthly
//! baseline, or the participant's long-term baseline. Monthly means follow
//! the workday/weekend rules: the short-term workday mean excludes Friday
//! anchors, the short-term weekend mean uses Saturday->Sunday pairs only.

use std::collections::BTreeMap;

use chrono::{Datelike, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};

use crate::emd::emd;
use crate::error::{Error, Result};
use crate::ingest::StepRecord;
use crate::types::{DayClass, YearMonth};

pub const DEFAULT_EPSILON: f64 = 1e-6;

/// Partition of the 24 hours into K contiguous segments.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segmentation {
    boundaries: Vec<u8>,
}

impl Segmentation {
    /// `boundaries` are segment start hours; the first must be 0 and they
    /// must be strictly increasing within [0, 24).
    pub fn new(boundaries: Vec<u8>) -> Result<Self> {
        if boundaries.len() < 2 {
            return Err(Error::invalid("segmentation needs at least 2 segments"));
        }
        if boundaries[0] != 0 {
            return Err(Error::invalid("first segment boundary must be hour 0"));
        }
        if boundaries.windows(2).any(|w| w[0] >= w[1]) || *boundaries.last().unwrap() > 23 {
            return Err(Error::invalid(
                "segment boundaries must be strictly increasing hours in [0, 24)",
            ));
        }
        Ok(Segmentation { boundaries })
    }

    /// Evenly split the day into `k` segments; 24 must be divisible by k.
    pub fn even(k: usize) -> Result<Self> {
        if k < 2 || 24 % k != 0 {
            return Err(Error::invalid(format!(
                "cannot split 24 hours evenly into {k} segments"
            )));
        }
        let step = (24 / k) as u8;
        Segmentation::new((0..k).map(|i| i as u8 * step).collect())
    }

    pub fn k(&self) -> usize {
        self.boundaries.len()
    }

    pub fn boundaries(&self) -> &[u8] {
        &self.boundaries
    }

    pub fn segment_of(&self, hour: u8) -> usize {
        debug_assert!(hour < 24);
        match self.boundaries.binary_search(&hour) {
            Ok(i) => i,
            Err(i) => i - 1,
        }
    }
}

impl Default for Segmentation {
    /// Night, morning, afternoon, evening.
    fn default() -> Self {
        Segmentation::new(vec![0, 6, 12, 18]).unwrap()
    }
}

/// Normalized per-segment step proportions for one participant-day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayDistribution {
    pub participant_id: String,
    pub date: NaiveDate,
    pub day_class: DayClass,
    pub proportions: Vec<f64>,
    pub total_steps: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineScope {
    Month(YearMonth),
    LongTerm,
}

/// Per-segment mean rhythm of a participant over a month or the full study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineDistribution {
    pub participant_id: String,
    pub scope: BaselineScope,
    pub day_class: DayClass,
    pub proportions: Vec<f64>,
    pub n_days: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsistencyKind {
    Short,
    Monthly,
    Long,
}

impl std::fmt::Display for ConsistencyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConsistencyKind::Short => write!(f, "short"),
            ConsistencyKind::Monthly => write!(f, "monthly"),
            ConsistencyKind::Long => write!(f, "long"),
        }
    }
}

/// One consistency value for one participant-day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyRecord {
    pub participant_id: String,
    pub date: NaiveDate,
    pub kind: ConsistencyKind,
    pub day_class: DayClass,
    /// Inverse distance, capped at 1/epsilon.
    pub value: f64,
    /// Raw EMD underlying the value.
    pub distance: f64,
    /// Distance rescaled by K-1 for cross-segmentation comparison.
    pub normalized_distance: f64,
}

/// Per-participant month means of the six consistency series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthlyConsistency {
    pub participant_id: String,
    pub year_month: YearMonth,
    pub short_workday: Option<f64>,
    pub short_weekend: Option<f64>,
    pub monthly_workday: Option<f64>,
    pub monthly_weekend: Option<f64>,
    pub long_workday: Option<f64>,
    pub long_weekend: Option<f64>,
    pub n_short_workday: usize,
    pub n_short_weekend: usize,
    pub n_monthly_workday: usize,
    pub n_monthly_weekend: usize,
    pub n_long_workday: usize,
    pub n_long_weekend: usize,
}

/// Inverse distance with the configured floor.
pub fn consistency_from_distance(distance: f64, epsilon: f64) -> f64 {
    1.0 / distance.max(epsilon)
}

/// Aggregate one participant-day of hourly records into a rhythm
/// distribution. Missing hours count as zero steps; a day with no records
/// or zero total steps is a missing day (`None`).
pub fn build_day_distribution(
    records: &[StepRecord],
    seg: &Segmentation,
) -> Result<Option<DayDistribution>> {
    let Some(first) = records.first() else {
        return Ok(None);
    };
    if records
        .iter()
        .any(|r| r.participant_id != first.participant_id || r.date != first.date)
    {
        return Err(Error::invalid(
            "build_day_distribution: records span multiple participant-days",
        ));
    }
    let mut counts = vec![0u64; seg.k()];
    for r in records {
        if r.hour > 23 {
            return Err(Error::invalid(format!("hour {} out of range", r.hour)));
        }
        counts[seg.segment_of(r.hour)] += r.steps;
    }
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Ok(None);
    }
    Ok(Some(DayDistribution {
        participant_id: first.participant_id.clone(),
        date: first.date,
        day_class: DayClass::of(first.date),
        proportions: counts.iter().map(|&c| c as f64 / total as f64).collect(),
        total_steps: total,
    }))
}

/// Inverse EMD between two consecutive days of the same participant.
pub fn short_term_consistency(
    day: &DayDistribution,
    next: &DayDistribution,
    epsilon: f64,
) -> Result<f64> {
    if day.participant_id != next.participant_id {
        return Err(Error::invalid(
            "short_term_consistency: records belong to different participants",
        ));
    }
    if next.date != day.date.succ_opt().unwrap() {
        return Err(Error::invalid(format!(
            "short_term_consistency: {} and {} are not consecutive days",
            day.date, next.date
        )));
    }
    Ok(consistency_from_distance(
        emd(&day.proportions, &next.proportions)?,
        epsilon,
    ))
}

/// Per-segment mean of a set of day distributions of one participant and
/// one day class. The mean of vectors that each sum to 1 sums to 1.
pub fn baseline(
    distributions: &[&DayDistribution],
    scope: BaselineScope,
    day_class: DayClass,
) -> Result<BaselineDistribution> {
    let Some(first) = distributions.first() else {
        return Err(Error::invalid("baseline: empty set of distributions"));
    };
    if distributions
        .iter()
        .any(|d| d.participant_id != first.participant_id || d.day_class != day_class)
    {
        return Err(Error::invalid(
            "baseline: mixed participants or day classes",
        ));
    }
    if let BaselineScope::Month(ym) = scope {
        if distributions.iter().any(|d| YearMonth::of(d.date) != ym) {
            return Err(Error::invalid(format!(
                "baseline: distribution outside scope month {ym}"
            )));
        }
    }
    let k = first.proportions.len();
    let mut mean = vec![0.0; k];
    for d in distributions {
        for (m, p) in mean.iter_mut().zip(&d.proportions) {
            *m += p;
        }
    }
    let n = distributions.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    Ok(BaselineDistribution {
        participant_id: first.participant_id.clone(),
        scope,
        day_class,
        proportions: mean,
        n_days: distributions.len(),
    })
}

fn baseline_consistency(
    day: &DayDistribution,
    base: &BaselineDistribution,
    epsilon: f64,
) -> Result<f64> {
    if day.participant_id != base.participant_id {
        return Err(Error::invalid(
            "consistency: day and baseline belong to different participants",
        ));
    }
    if day.day_class != base.day_class {
        return Err(Error::invalid(
            "consistency: day class does not match baseline day class",
        ));
    }
    Ok(consistency_from_distance(
        emd(&day.proportions, &base.proportions)?,
        epsilon,
    ))
}

/// Inverse EMD against the baseline of the day's calendar month.
pub fn monthly_consistency(
    day: &DayDistribution,
    monthly_baseline: &BaselineDistribution,
    epsilon: f64,
) -> Result<f64> {
    match monthly_baseline.scope {
        BaselineScope::Month(ym) if ym == YearMonth::of(day.date) => {
            baseline_consistency(day, monthly_baseline, epsilon)
        }
        _ => Err(Error::invalid(
            "monthly_consistency: baseline scope does not match the day's month",
        )),
    }
}

/// Inverse EMD against the participant's full-study baseline.
pub fn long_term_consistency(
    day: &DayDistribution,
    long_baseline: &BaselineDistribution,
    epsilon: f64,
) -> Result<f64> {
    match long_baseline.scope {
        BaselineScope::LongTerm => baseline_consistency(day, long_baseline, epsilon),
        _ => Err(Error::invalid(
            "long_term_consistency: baseline scope is not long-term",
        )),
    }
}

fn mean_of(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Month means of the consistency series for one participant-month.
///
/// Short-term workday means use Monday-Thursday anchors (a Friday anchor
/// would pair a workday with a Saturday); short-term weekend means use
/// Saturday anchors only (the Saturday->Sunday pair). Monthly and
/// long-term means run over all workdays and all weekend days.
pub fn monthly_aggregate(records: &[ConsistencyRecord]) -> Result<MonthlyConsistency> {
    let Some(first) = records.first() else {
        return Err(Error::invalid("monthly_aggregate: no records"));
    };
    let ym = YearMonth::of(first.date);
    if records
        .iter()
        .any(|r| r.participant_id != first.participant_id || YearMonth::of(r.date) != ym)
    {
        return Err(Error::invalid(
            "monthly_aggregate: records span multiple participant-months",
        ));
    }

    let mut short_wd = Vec::new();
    let mut short_we = Vec::new();
    let mut monthly_wd = Vec::new();
    let mut monthly_we = Vec::new();
    let mut long_wd = Vec::new();
    let mut long_we = Vec::new();
    for r in records {
        match r.kind {
            ConsistencyKind::Short => match r.date.weekday() {
                Weekday::Mon | Weekday::Tue | Weekday::Wed | Weekday::Thu => {
                    short_wd.push(r.value)
                }
                Weekday::Sat => short_we.push(r.value),
                // Friday anchors pair into Saturday; Sunday anchors pair
                // into Monday. Neither belongs to either mean.
                Weekday::Fri | Weekday::Sun => {}
            },
            ConsistencyKind::Monthly => match r.day_class {
                DayClass::Workday => monthly_wd.push(r.value),
                DayClass::Weekend => monthly_we.push(r.value),
            },
            ConsistencyKind::Long => match r.day_class {
                DayClass::Workday => long_wd.push(r.value),
                DayClass::Weekend => long_we.push(r.value),
            },
        }
    }

    Ok(MonthlyConsistency {
        participant_id: first.participant_id.clone(),
        year_month: ym,
        short_workday: mean_of(&short_wd),
        short_weekend: mean_of(&short_we),
        monthly_workday: mean_of(&monthly_wd),
        monthly_weekend: mean_of(&monthly_we),
        long_workday: mean_of(&long_wd),
        long_weekend: mean_of(&long_we),
        n_short_workday: short_wd.len(),
        n_short_weekend: short_we.len(),
        n_monthly_workday: monthly_wd.len(),
        n_monthly_weekend: monthly_we.len(),
        n_long_workday: long_wd.len(),
        n_long_weekend: long_we.len(),
    })
}

/// Keep a participant when available days / span days >= threshold.
/// Exactly at the threshold keeps (the rule drops "less than" it).
pub fn apply_participant_exclusion(
    available_days: usize,
    span_days: usize,
    threshold: f64,
) -> bool {
    if span_days == 0 {
        return false;
    }
    available_days as f64 / span_days as f64 >= threshold
}

/// Why a participant-month was dropped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MonthDropReason {
    TooFewWorkdays { have: usize, need: usize },
    TooFewFullWeekends { have: usize, need: usize },
    TooManyLeaveDays { have: u32, max: u32 },
    NoSurvey,
}

impl std::fmt::Display for MonthDropReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MonthDropReason::TooFewWorkdays { have, need } => {
                write!(f, "only {have} workdays with data, need {need}")
            }
            MonthDropReason::TooFewFullWeekends { have, need } => {
                write!(f, "only {have} full weekends with data, need {need}")
            }
            MonthDropReason::TooManyLeaveDays { have, max } => {
                write!(f, "{have} leave days exceeds the maximum of {max}")
            }
            MonthDropReason::NoSurvey => write!(f, "no survey response for the month"),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct ExclusionThresholds {
    /// Minimum share of available days over the participant's span.
    pub min_availability: f64,
    /// Minimum workday distributions per month.
    pub min_workdays: usize,
    /// Minimum full (Sat+Sun) weekends per month.
    pub min_full_weekends: usize,
    /// Maximum leave days per month for on-site attendance analysis.
    pub max_leave_days: u32,
}

impl Default for ExclusionThresholds {
    fn default() -> Self {
        ExclusionThresholds {
            min_availability: 0.20,
            min_workdays: 5,
            min_full_weekends: 2,
            max_leave_days: 7,
        }
    }
}

/// Month-level inclusion: enough workdays, enough full weekends, and (for
/// the on-site attendance model only) a survey with at most the configured
/// leave days.
pub fn apply_month_exclusions(
    workday_count: usize,
    full_weekend_count: usize,
    leave_days: Option<u32>,
    for_model3: bool,
    thresholds: &ExclusionThresholds,
) -> std::result::Result<(), MonthDropReason> {
    if workday_count < thresholds.min_workdays {
        return Err(MonthDropReason::TooFewWorkdays {
            have: workday_count,
            need: thresholds.min_workdays,
        });
    }
    if full_weekend_count < thresholds.min_full_weekends {
        return Err(MonthDropReason::TooFewFullWeekends {
            have: full_weekend_count,
            need: thresholds.min_full_weekends,
        });
    }
    if for_model3 {
        match leave_days {
            None => return Err(MonthDropReason::NoSurvey),
            Some(days) if days > thresholds.max_leave_days => {
                return Err(MonthDropReason::TooManyLeaveDays {
                    have: days,
                    max: thresholds.max_leave_days,
                });
            }
            Some(_) => {}
        }
    }
    Ok(())
}

/// Count weekends whose Saturday falls in `ym` and whose Sunday (the next
/// calendar day) is also present.
pub fn count_full_weekends(dates: &BTreeMap<NaiveDate, ()>, ym: YearMonth) -> usize {
    dates
        .keys()
        .filter(|d| YearMonth::of(**d) == ym && d.weekday() == Weekday::Sat)
        .filter(|d| dates.contains_key(&d.succ_opt().unwrap()))
        .count()
}
