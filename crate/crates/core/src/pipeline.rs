//! End-to-end computation: hourly step records in, per-day consistency
//! series and per-month aggregates out, with an audit trail of every
//! participant and month the exclusion rules removed.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::emd::emd;
use crate::error::{Error, Result};
use crate::ingest::{ParticipantProfile, StepRecord, StringencyPoint, SurveyResponse};
use crate::lmm::Table;
use crate::rhythm::{
    apply_month_exclusions, apply_participant_exclusion, baseline, build_day_distribution,
    count_full_weekends, long_term_consistency, monthly_aggregate, monthly_consistency,
    short_term_consistency, BaselineScope, ConsistencyKind, ConsistencyRecord, DayDistribution,
    ExclusionThresholds, MonthDropReason, MonthlyConsistency, Segmentation,
};
use crate::types::{DayClass, YearMonth};

#[derive(Debug, Clone)]
pub struct PipelineOptions {
    pub segmentation: Segmentation,
    pub epsilon: f64,
    pub thresholds: ExclusionThresholds,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            segmentation: Segmentation::default(),
            epsilon: crate::rhythm::DEFAULT_EPSILON,
            thresholds: ExclusionThresholds::default(),
        }
    }
}

/// Participant-level availability decision.
#[derive(Debug, Clone, Serialize)]
pub struct ParticipantAudit {
    pub participant_id: String,
    pub available_days: usize,
    pub span_days: usize,
    pub kept: bool,
}

/// Month-level decision for a kept participant.
#[derive(Debug, Clone, Serialize)]
pub struct MonthAudit {
    pub participant_id: String,
    pub year_month: YearMonth,
    /// None when the month survives the workday/weekend rules.
    pub drop_reason: Option<MonthDropReason>,
    /// Extra rule for the on-site attendance model: a survey must exist
    /// and report few enough leave days.
    pub attendance_eligible: bool,
}

#[derive(Debug, Clone)]
pub struct MonthlyRow {
    pub consistency: MonthlyConsistency,
    pub attendance_eligible: bool,
}

#[derive(Debug)]
pub struct ConsistencyOutput {
    /// Every per-day value for kept participants, including months that
    /// the month-level rules later drop from the aggregates.
    pub daily: Vec<ConsistencyRecord>,
    /// Month means for months that pass the workday/weekend rules.
    pub monthly: Vec<MonthlyRow>,
    pub participant_audit: Vec<ParticipantAudit>,
    pub month_audit: Vec<MonthAudit>,
}

struct ParticipantResult {
    daily: Vec<ConsistencyRecord>,
    monthly: Vec<MonthlyRow>,
    audit: ParticipantAudit,
    month_audit: Vec<MonthAudit>,
}

fn process_participant(
    pid: &str,
    days: &BTreeMap<chrono::NaiveDate, Vec<StepRecord>>,
    surveys: &BTreeMap<YearMonth, &SurveyResponse>,
    options: &PipelineOptions,
) -> Result<ParticipantResult> {
    let mut distributions: BTreeMap<chrono::NaiveDate, DayDistribution> = BTreeMap::new();
    for records in days.values() {
        if let Some(d) = build_day_distribution(records, &options.segmentation)? {
            distributions.insert(d.date, d);
        }
    }

    let (available, span) = match (distributions.keys().next(), distributions.keys().last()) {
        (Some(first), Some(last)) => (
            distributions.len(),
            ((*last - *first).num_days() + 1) as usize,
        ),
        _ => (0, 0),
    };
    let kept = apply_participant_exclusion(available, span, options.thresholds.min_availability);
    let audit = ParticipantAudit {
        participant_id: pid.to_string(),
        available_days: available,
        span_days: span,
        kept,
    };
    if !kept {
        return Ok(ParticipantResult {
            daily: Vec::new(),
            monthly: Vec::new(),
            audit,
            month_audit: Vec::new(),
        });
    }

    // Long-term baselines span all of the participant's retained days.
    let mut long_baselines = BTreeMap::new();
    for class in [DayClass::Workday, DayClass::Weekend] {
        let of_class: Vec<&DayDistribution> = distributions
            .values()
            .filter(|d| d.day_class == class)
            .collect();
        if !of_class.is_empty() {
            long_baselines.insert(class, baseline(&of_class, BaselineScope::LongTerm, class)?);
        }
    }

    let mut by_month: BTreeMap<YearMonth, Vec<&DayDistribution>> = BTreeMap::new();
    for d in distributions.values() {
        by_month.entry(YearMonth::of(d.date)).or_default().push(d);
    }

    let mut daily = Vec::new();
    let mut monthly = Vec::new();
    let mut month_audit = Vec::new();
    let present: BTreeMap<chrono::NaiveDate, ()> =
        distributions.keys().map(|d| (*d, ())).collect();

    for (ym, month_days) in &by_month {
        let mut month_baselines = BTreeMap::new();
        for class in [DayClass::Workday, DayClass::Weekend] {
            let of_class: Vec<&DayDistribution> = month_days
                .iter()
                .filter(|d| d.day_class == class)
                .copied()
                .collect();
            if !of_class.is_empty() {
                month_baselines.insert(class, baseline(&of_class, BaselineScope::Month(*ym), class)?);
            }
        }

        let norm = options.segmentation.k() as f64 - 1.0;
        let mut records = Vec::new();
        for d in month_days {
            if let Some(next) = distributions.get(&d.date.succ_opt().unwrap()) {
                let distance = emd(&d.proportions, &next.proportions)?;
                records.push(ConsistencyRecord {
                    participant_id: pid.to_string(),
                    date: d.date,
                    kind: ConsistencyKind::Short,
                    day_class: d.day_class,
                    value: short_term_consistency(d, next, options.epsilon)?,
                    distance,
                    normalized_distance: distance / norm,
                });
            }
            if let Some(base) = month_baselines.get(&d.day_class) {
                let distance = emd(&d.proportions, &base.proportions)?;
                records.push(ConsistencyRecord {
                    participant_id: pid.to_string(),
                    date: d.date,
                    kind: ConsistencyKind::Monthly,
                    day_class: d.day_class,
                    value: monthly_consistency(d, base, options.epsilon)?,
                    distance,
                    normalized_distance: distance / norm,
                });
            }
            if let Some(base) = long_baselines.get(&d.day_class) {
                let distance = emd(&d.proportions, &base.proportions)?;
                records.push(ConsistencyRecord {
                    participant_id: pid.to_string(),
                    date: d.date,
                    kind: ConsistencyKind::Long,
                    day_class: d.day_class,
                    value: long_term_consistency(d, base, options.epsilon)?,
                    distance,
                    normalized_distance: distance / norm,
                });
            }
        }

        let workday_count = month_days
            .iter()
            .filter(|d| d.day_class == DayClass::Workday)
            .count();
        let full_weekends = count_full_weekends(&present, *ym);
        let leave_days = surveys.get(ym).map(|s| s.leave_days);

        let base_ok =
            apply_month_exclusions(workday_count, full_weekends, None, false, &options.thresholds);
        let attendance_ok = apply_month_exclusions(
            workday_count,
            full_weekends,
            leave_days,
            true,
            &options.thresholds,
        )
        .is_ok();

        month_audit.push(MonthAudit {
            participant_id: pid.to_string(),
            year_month: *ym,
            drop_reason: base_ok.clone().err(),
            attendance_eligible: attendance_ok,
        });
        if base_ok.is_ok() && !records.is_empty() {
            monthly.push(MonthlyRow {
                consistency: monthly_aggregate(&records)?,
                attendance_eligible: attendance_ok,
            });
        }
        daily.extend(records);
    }

    Ok(ParticipantResult {
        daily,
        monthly,
        audit,
        month_audit,
    })
}

/// Run the full per-participant computation. Participants are processed
/// in parallel and merged in participant order, so output is independent
/// of thread count.
pub fn compute_consistency(
    steps: &[StepRecord],
    surveys: &[SurveyResponse],
    options: &PipelineOptions,
) -> Result<ConsistencyOutput> {
    let mut by_participant: BTreeMap<String, BTreeMap<chrono::NaiveDate, Vec<StepRecord>>> =
        BTreeMap::new();
    for r in steps {
        by_participant
            .entry(r.participant_id.clone())
            .or_default()
            .entry(r.date)
            .or_default()
            .push(r.clone());
    }
    let mut survey_map: BTreeMap<String, BTreeMap<YearMonth, &SurveyResponse>> = BTreeMap::new();
    for s in surveys {
        survey_map
            .entry(s.participant_id.clone())
            .or_default()
            .insert(s.year_month, s);
    }
    let empty = BTreeMap::new();

    let participants: Vec<(&String, &BTreeMap<chrono::NaiveDate, Vec<StepRecord>>)> =
        by_participant.iter().collect();
    let results: Vec<Result<ParticipantResult>> = participants
        .par_iter()
        .map(|(pid, days)| {
            process_participant(
                pid,
                days,
                survey_map.get(*pid).unwrap_or(&empty),
                options,
            )
        })
        .collect();

    let mut out = ConsistencyOutput {
        daily: Vec::new(),
        monthly: Vec::new(),
        participant_audit: Vec::new(),
        month_audit: Vec::new(),
    };
    for r in results {
        let r = r?;
        out.daily.extend(r.daily);
        out.monthly.extend(r.monthly);
        out.participant_audit.push(r.audit);
        out.month_audit.extend(r.month_audit);
    }
    Ok(out)
}

fn bool_label(v: bool) -> String {
    if v { "yes" } else { "no" }.to_string()
}

/// Assemble the participant-month model table for the consistency models.
/// One row per kept participant-month; response columns are the month
/// means, covariates come from demographics. Age enters as an ordinal
/// score; gender is missing for non-binary participants (too few for a
/// stable level), so gender models drop those rows.
pub fn consistency_model_table(
    monthly: &[MonthlyRow],
    demographics: &[ParticipantProfile],
) -> Result<Table> {
    let profiles: BTreeMap<&str, &ParticipantProfile> = demographics
        .iter()
        .map(|p| (p.participant_id.as_str(), p))
        .collect();

    let mut participant = Vec::new();
    let mut month = Vec::new();
    let mut short_workday = Vec::new();
    let mut short_weekend = Vec::new();
    let mut monthly_workday = Vec::new();
    let mut monthly_weekend = Vec::new();
    let mut long_workday = Vec::new();
    let mut long_weekend = Vec::new();
    let mut age = Vec::new();
    let mut gender = Vec::new();
    let mut migrant = Vec::new();
    let mut live_alone = Vec::new();
    let mut has_children = Vec::new();
    let mut role = Vec::new();

    for row in monthly {
        let mc = &row.consistency;
        let Some(profile) = profiles.get(mc.participant_id.as_str()) else {
            return Err(Error::invalid(format!(
                "no demographics row for participant {}",
                mc.participant_id
            )));
        };
        participant.push(Some(mc.participant_id.clone()));
        month.push(Some(mc.year_month.to_string()));
        short_workday.push(mc.short_workday);
        short_weekend.push(mc.short_weekend);
        monthly_workday.push(mc.monthly_workday);
        monthly_weekend.push(mc.monthly_weekend);
        long_workday.push(mc.long_workday);
        long_weekend.push(mc.long_weekend);
        age.push(Some(profile.age_group.ordinal()));
        gender.push(match profile.gender {
            crate::ingest::Gender::Female => Some("female".to_string()),
            crate::ingest::Gender::Male => Some("male".to_string()),
            crate::ingest::Gender::NonBinary => None,
        });
        migrant.push(Some(bool_label(profile.migrant())));
        live_alone.push(Some(bool_label(profile.live_alone)));
        has_children.push(Some(bool_label(profile.has_children)));
        role.push(Some(
            match profile.role {
                crate::ingest::Role::Academic => "academic",
                crate::ingest::Role::Service => "service",
            }
            .to_string(),
        ));
    }

    let mut table = Table::new();
    table.push_categorical("participant", participant)?;
    table.push_categorical("month", month)?;
    table.push_numeric("short_workday", short_workday)?;
    table.push_numeric("short_weekend", short_weekend)?;
    table.push_numeric("monthly_workday", monthly_workday)?;
    table.push_numeric("monthly_weekend", monthly_weekend)?;
    table.push_numeric("long_workday", long_workday)?;
    table.push_numeric("long_weekend", long_weekend)?;
    table.push_numeric("age", age)?;
    table.push_categorical("gender", gender)?;
    table.push_categorical("migrant", migrant)?;
    table.push_categorical("live_alone", live_alone)?;
    table.push_categorical("has_children", has_children)?;
    table.push_categorical("role", role)?;
    Ok(table)
}

/// Assemble the on-site attendance model table: one row per eligible
/// participant-month with a survey, response is the reported on-site
/// percentage, the rhythm covariate is the month's long-term workday
/// consistency, grouped by calendar month.
pub fn attendance_model_table(
    monthly: &[MonthlyRow],
    surveys: &[SurveyResponse],
    stringency_points: &[StringencyPoint],
) -> Result<Table> {
    let mut survey_map: BTreeMap<(String, YearMonth), &SurveyResponse> = BTreeMap::new();
    for s in surveys {
        survey_map.insert((s.participant_id.clone(), s.year_month), s);
    }
    let mut stringency_sum: BTreeMap<YearMonth, (f64, usize)> = BTreeMap::new();
    for p in stringency_points {
        let e = stringency_sum.entry(YearMonth::of(p.date)).or_insert((0.0, 0));
        e.0 += p.index;
        e.1 += 1;
    }
    let stringency_mean: BTreeMap<YearMonth, f64> = stringency_sum
        .iter()
        .map(|(ym, (sum, n))| (*ym, sum / *n as f64))
        .collect();

    let mut participant = Vec::new();
    let mut month = Vec::new();
    let mut onsite = Vec::new();
    let mut long_workday = Vec::new();
    let mut stringency = Vec::new();

    for row in monthly {
        if !row.attendance_eligible {
            continue;
        }
        let mc = &row.consistency;
        let Some(survey) = survey_map.get(&(mc.participant_id.clone(), mc.year_month)) else {
            continue;
        };
        participant.push(Some(mc.participant_id.clone()));
        month.push(Some(mc.year_month.to_string()));
        onsite.push(Some(survey.onsite_pct));
        long_workday.push(mc.long_workday);
        stringency.push(stringency_mean.get(&mc.year_month).copied());
    }

    let mut table = Table::new();
    table.push_categorical("participant", participant)?;
    table.push_categorical("month", month)?;
    table.push_numeric("onsite_pct", onsite)?;
    table.push_numeric("long_workday", long_workday)?;
    table.push_numeric("stringency", stringency)?;
    Ok(table)
}

/// Reference levels shared by all default models.
pub fn default_reference_levels() -> std::collections::HashMap<String, String> {
    [
        ("gender", "female"),
        ("role", "academic"),
        ("migrant", "no"),
        ("live_alone", "no"),
        ("has_children", "no"),
    ]
    .iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect()
}

pub fn write_daily_csv<W: Write>(w: W, records: &[ConsistencyRecord]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(w);
    writer.write_record([
        "participant_id",
        "date",
        "kind",
        "day_class",
        "consistency",
        "distance",
        "normalized_distance",
    ])?;
    for r in records {
        let kind = match r.kind {
            ConsistencyKind::Short => "short",
            ConsistencyKind::Monthly => "monthly",
            ConsistencyKind::Long => "long",
        };
        let class = match r.day_class {
            DayClass::Workday => "workday",
            DayClass::Weekend => "weekend",
        };
        writer.write_record([
            r.participant_id.as_str(),
            &r.date.to_string(),
            kind,
            class,
            &format!("{:.9}", r.value),
            &format!("{:.9}", r.distance),
            &format!("{:.9}", r.normalized_distance),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

fn opt_fmt(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.9}")).unwrap_or_default()
}

pub fn write_monthly_csv<W: Write>(w: W, rows: &[MonthlyRow]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(w);
    writer.write_record([
        "participant_id",
        "year_month",
        "short_workday",
        "short_weekend",
        "monthly_workday",
        "monthly_weekend",
        "long_workday",
        "long_weekend",
        "attendance_eligible",
    ])?;
    for row in rows {
        let mc = &row.consistency;
        writer.write_record([
            mc.participant_id.as_str(),
            &mc.year_month.to_string(),
            &opt_fmt(mc.short_workday),
            &opt_fmt(mc.short_weekend),
            &opt_fmt(mc.monthly_workday),
            &opt_fmt(mc.monthly_weekend),
            &opt_fmt(mc.long_workday),
            &opt_fmt(mc.long_weekend),
            if row.attendance_eligible { "true" } else { "false" },
        ])?;
    }
    writer.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct AuditReport<'a> {
    participants: &'a [ParticipantAudit],
    months: &'a [MonthAudit],
}

pub fn write_audit_json<W: Write>(w: W, output: &ConsistencyOutput) -> Result<()> {
    serde_json::to_writer_pretty(
        w,
        &AuditReport {
            participants: &output.participant_audit,
            months: &output.month_audit,
        },
    )
    .map_err(|e| Error::model(format!("audit serialization: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn day(pid: &str, date: &str, pattern: &[(u8, u64)]) -> Vec<StepRecord> {
        let date = date.parse::<NaiveDate>().unwrap();
        pattern
            .iter()
            .map(|&(hour, steps)| StepRecord {
                participant_id: pid.to_string(),
                date,
                hour,
                steps,
            })
            .collect()
    }

    /// Three weeks of identical workday/weekend patterns for one
    /// participant: all consistency values hit the epsilon cap.
    #[test]
    fn identical_days_hit_the_cap() {
        let mut steps = Vec::new();
        let start = NaiveDate::from_ymd_opt(2022, 3, 1).unwrap();
        for offset in 0..21 {
            let date = start + chrono::Duration::days(offset);
            let pattern: &[(u8, u64)] = if DayClass::of(date) == DayClass::Workday {
                &[(8, 300), (13, 500), (20, 200)]
            } else {
                &[(10, 400), (16, 600)]
            };
            steps.extend(day("p1", &date.to_string(), pattern));
        }
        let out = compute_consistency(&steps, &[], &PipelineOptions::default()).unwrap();
        assert_eq!(out.participant_audit.len(), 1);
        assert!(out.participant_audit[0].kept);
        // short-term pairs of the same class are identical; monthly and
        // long-term compare each day to the mean of identical days
        for r in out
            .daily
            .iter()
            .filter(|r| r.kind != ConsistencyKind::Short)
        {
            assert!((r.value - 1.0 / 1e-6).abs() < 1e-3, "{:?}", r);
        }
        assert_eq!(out.monthly.len(), 1);
        let mc = &out.monthly[0].consistency;
        assert!(mc.short_workday.is_some());
        assert!(mc.short_weekend.is_some());
        assert!(!out.monthly[0].attendance_eligible, "no survey given");
    }

    #[test]
    fn sparse_participant_is_dropped() {
        // two observed days spread over three months: 2/61 < 0.20
        let mut steps = day("p1", "2022-03-01", &[(8, 100)]);
        steps.extend(day("p1", "2022-04-30", &[(8, 100)]));
        let out = compute_consistency(&steps, &[], &PipelineOptions::default()).unwrap();
        assert!(!out.participant_audit[0].kept);
        assert!(out.daily.is_empty());
        assert!(out.monthly.is_empty());
    }

    #[test]
    fn month_without_enough_workdays_is_dropped_but_daily_kept() {
        let mut steps = Vec::new();
        // full march
        let start = NaiveDate::from_ymd_opt(2022, 3, 1).unwrap();
        for offset in 0..31 {
            let date = start + chrono::Duration::days(offset);
            steps.extend(day("p1", &date.to_string(), &[(9, 100), (15, 200)]));
        }
        // four workdays and one weekend of april (april 1 is a friday)
        for d in ["2022-04-01", "2022-04-04", "2022-04-05", "2022-04-06"] {
            steps.extend(day("p1", d, &[(9, 100), (15, 200)]));
        }
        steps.extend(day("p1", "2022-04-02", &[(10, 100)]));
        steps.extend(day("p1", "2022-04-03", &[(10, 100)]));
        let out = compute_consistency(&steps, &[], &PipelineOptions::default()).unwrap();
        let april: Vec<_> = out
            .month_audit
            .iter()
            .filter(|m| m.year_month.to_string() == "2022-04")
            .collect();
        assert_eq!(april.len(), 1);
        assert!(matches!(
            april[0].drop_reason,
            Some(MonthDropReason::TooFewWorkdays { have: 4, need: 5 })
        ));
        assert_eq!(out.monthly.len(), 1, "march only");
        assert!(out
            .daily
            .iter()
            .any(|r| YearMonth::of(r.date).to_string() == "2022-04"));
    }

    #[test]
    fn survey_gates_attendance_eligibility() {
        let mut steps = Vec::new();
        let start = NaiveDate::from_ymd_opt(2022, 3, 1).unwrap();
        for offset in 0..31 {
            let date = start + chrono::Duration::days(offset);
            steps.extend(day("p1", &date.to_string(), &[(9, 100), (15, 200)]));
        }
        let survey = SurveyResponse {
            participant_id: "p1".to_string(),
            year_month: "2022-03".parse().unwrap(),
            onsite_pct: 40.0,
            leave_days: 3,
            walking_hours: None,
            nonwalking_hours: None,
            stage: None,
        };
        let out =
            compute_consistency(&steps, std::slice::from_ref(&survey), &PipelineOptions::default())
                .unwrap();
        assert!(out.monthly[0].attendance_eligible);

        let too_much_leave = SurveyResponse {
            leave_days: 8,
            ..survey
        };
        let out = compute_consistency(&steps, &[too_much_leave], &PipelineOptions::default())
            .unwrap();
        assert!(!out.monthly[0].attendance_eligible);
    }

    #[test]
    fn output_is_deterministic_across_thread_counts() {
        let config = crate::simulator::CohortConfig {
            n_participants: 8,
            end: NaiveDate::from_ymd_opt(2021, 9, 30).unwrap(),
            seed: 7,
            ..Default::default()
        };
        let cohort = crate::simulator::simulate_cohort(&config).unwrap();
        let options = PipelineOptions::default();
        let serial = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| compute_consistency(&cohort.steps, &cohort.surveys, &options))
            .unwrap();
        let parallel = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(|| compute_consistency(&cohort.steps, &cohort.surveys, &options))
            .unwrap();
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_daily_csv(&mut a, &serial.daily).unwrap();
        write_daily_csv(&mut b, &parallel.daily).unwrap();
        assert_eq!(a, b);
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_monthly_csv(&mut a, &serial.monthly).unwrap();
        write_monthly_csv(&mut b, &parallel.monthly).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn model_tables_assemble() {
        let config = crate::simulator::CohortConfig {
            n_participants: 10,
            end: NaiveDate::from_ymd_opt(2021, 10, 31).unwrap(),
            seed: 11,
            ..Default::default()
        };
        let cohort = crate::simulator::simulate_cohort(&config).unwrap();
        let out =
            compute_consistency(&cohort.steps, &cohort.surveys, &PipelineOptions::default())
                .unwrap();
        assert!(!out.monthly.is_empty());
        let table = consistency_model_table(&out.monthly, &cohort.demographics).unwrap();
        assert_eq!(table.n_rows(), out.monthly.len());
        let attendance =
            attendance_model_table(&out.monthly, &cohort.surveys, &cohort.stringency).unwrap();
        assert!(attendance.n_rows() > 0);
        assert!(attendance.n_rows() <= out.monthly.len());
    }
}
