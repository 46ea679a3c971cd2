//! Synthetic cohort generation with planted effects, so the pipeline and
//! models can be validated end to end without the original study data.
//!
//! Daily rhythms are drawn from a Dirichlet-style simplex distribution
//! around a per-participant archetype; a single concentration scalar
//! controls day-to-day dispersion, and planted group effects act on the
//! log concentration (lower concentration means noisier rhythms and lower
//! expected consistency). On-site work percentages are a linear function
//! of the participant's realized long-term consistency, a stringency-linked
//! month effect, and noise.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Gamma, LogNormal, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{
    write_demographics_csv, write_step_csv, write_stringency_csv, write_survey_csv, AgeGroup,
    Gender, Origin, ParticipantProfile, Role, Stage, StepRecord, StringencyPoint, SurveyResponse,
};
use crate::rhythm::{
    baseline, build_day_distribution, long_term_consistency, BaselineScope, DayDistribution,
    Segmentation,
};
use crate::types::{DayClass, YearMonth};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CohortConfig {
    pub n_participants: usize,
    pub start: NaiveDate,
    pub end: NaiveDate,
    /// female, male, non_binary
    pub gender_probs: Vec<f64>,
    /// academic, service
    pub role_probs: Vec<f64>,
    /// 25-35, 36-50, 51-66
    pub age_probs: Vec<f64>,
    /// finland, europe_other, outside_europe
    pub origin_probs: Vec<f64>,
    pub live_alone_prob: f64,
    pub has_children_prob: f64,
    /// Mean segment proportions per day class (must sum to 1).
    pub workday_archetype: Vec<f64>,
    pub weekend_archetype: Vec<f64>,
    /// Dirichlet concentration around the archetype; +inf means every day
    /// equals the archetype exactly.
    pub concentration: f64,
    /// SD of per-participant jitter on log concentration.
    pub concentration_jitter_sd: f64,
    /// Planted effects on log concentration (negative = noisier rhythms,
    /// hence lower consistency).
    pub live_alone_log_concentration: f64,
    pub migrant_log_concentration: f64,
    /// Amplitude of a yearly cosine cycle on log concentration, creating
    /// month-to-month consistency variation shared by the whole cohort.
    pub seasonal_log_concentration: f64,
    pub missing_day_prob: f64,
    /// Per-day probability of permanent dropout.
    pub dropout_hazard: f64,
    pub daily_steps_log_mean: f64,
    pub daily_steps_log_sd: f64,
    /// On-site percentage model: base + slope * c_long_month
    /// - stringency_onsite_effect * (stringency_month - series mean) + noise.
    pub onsite_base: f64,
    pub onsite_consistency_slope: f64,
    pub onsite_noise_sd: f64,
    pub stringency_onsite_effect: f64,
    /// Generated stringency series: base + amplitude * seasonal cycle.
    pub stringency_base: f64,
    pub stringency_amplitude: f64,
    pub mean_leave_days: f64,
    /// Planted pre -> early drop in weekly non-walking exercise hours.
    pub early_nonwalking_drop: f64,
    pub walking_hours_mean: f64,
    pub nonwalking_hours_mean: f64,
    pub activity_noise_sd: f64,
    /// Distance floor used when computing realized consistency.
    pub epsilon: f64,
    pub segment_boundaries: Vec<u8>,
    pub seed: u64,
}

impl Default for CohortConfig {
    fn default() -> Self {
        CohortConfig {
            n_participants: 100,
            start: NaiveDate::from_ymd_opt(2021, 7, 1).unwrap(),
            end: NaiveDate::from_ymd_opt(2022, 6, 30).unwrap(),
            gender_probs: vec![0.55, 0.42, 0.03],
            role_probs: vec![0.7, 0.3],
            age_probs: vec![0.4, 0.4, 0.2],
            origin_probs: vec![0.7, 0.15, 0.15],
            live_alone_prob: 0.3,
            has_children_prob: 0.4,
            workday_archetype: vec![0.05, 0.35, 0.35, 0.25],
            weekend_archetype: vec![0.08, 0.25, 0.40, 0.27],
            concentration: 60.0,
            concentration_jitter_sd: 0.25,
            live_alone_log_concentration: 0.0,
            migrant_log_concentration: 0.0,
            seasonal_log_concentration: 0.0,
            missing_day_prob: 0.15,
            dropout_hazard: 0.0003,
            daily_steps_log_mean: 9.0,
            daily_steps_log_sd: 0.35,
            onsite_base: 40.0,
            onsite_consistency_slope: 0.0,
            onsite_noise_sd: 8.0,
            stringency_onsite_effect: 0.0,
            stringency_base: 45.0,
            stringency_amplitude: 25.0,
            mean_leave_days: 2.0,
            early_nonwalking_drop: 0.0,
            walking_hours_mean: 6.0,
            nonwalking_hours_mean: 3.5,
            activity_noise_sd: 1.0,
            epsilon: 1e-6,
            segment_boundaries: vec![0, 6, 12, 18],
            seed: 1,
        }
    }
}

impl CohortConfig {
    pub fn validate(&self) -> Result<()> {
        let check_probs = |p: &[f64], what: &str, len: usize| -> Result<()> {
            if p.len() != len {
                return Err(Error::Config(format!("{what}: expected {len} entries")));
            }
            if p.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                return Err(Error::Config(format!("{what}: probabilities in [0,1]")));
            }
            if (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!("{what}: probabilities must sum to 1")));
            }
            Ok(())
        };
        check_probs(&self.gender_probs, "gender_probs", 3)?;
        check_probs(&self.role_probs, "role_probs", 2)?;
        check_probs(&self.age_probs, "age_probs", 3)?;
        check_probs(&self.origin_probs, "origin_probs", 3)?;
        let seg = Segmentation::new(self.segment_boundaries.clone())?;
        for (name, arch) in [
            ("workday_archetype", &self.workday_archetype),
            ("weekend_archetype", &self.weekend_archetype),
        ] {
            if arch.len() != seg.k() {
                return Err(Error::Config(format!(
                    "{name}: expected {} segments",
                    seg.k()
                )));
            }
            if (arch.iter().sum::<f64>() - 1.0).abs() > 1e-9 || arch.iter().any(|&v| v < 0.0) {
                return Err(Error::Config(format!("{name}: must be a probability vector")));
            }
        }
        if self.concentration.is_nan() || self.concentration <= 0.0 {
            return Err(Error::Config(
                "concentration must be positive (use +inf for zero dispersion)".into(),
            ));
        }
        if self.n_participants == 0 {
            return Err(Error::Config("n_participants must be positive".into()));
        }
        if self.end < self.start {
            return Err(Error::Config("end date before start date".into()));
        }
        Ok(())
    }
}

/// Per-participant planted parameters, recorded in the ground truth.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParticipantTruth {
    pub participant_id: String,
    pub live_alone: bool,
    pub migrant: bool,
    pub concentration: f64,
    pub last_day: NaiveDate,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruth {
    pub config: CohortConfig,
    pub participants: Vec<ParticipantTruth>,
    pub monthly_stringency: BTreeMap<String, f64>,
}

#[derive(Debug)]
pub struct Cohort {
    pub steps: Vec<StepRecord>,
    pub demographics: Vec<ParticipantProfile>,
    pub surveys: Vec<SurveyResponse>,
    pub stringency: Vec<StringencyPoint>,
    pub ground_truth: GroundTruth,
}

impl Cohort {
    /// Write the four CSVs plus the ground-truth JSON into `dir`.
    pub fn write_to_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_step_csv(BufWriter::new(File::create(dir.join("steps.csv"))?), &self.steps)?;
        write_demographics_csv(
            BufWriter::new(File::create(dir.join("demographics.csv"))?),
            &self.demographics,
        )?;
        write_survey_csv(
            BufWriter::new(File::create(dir.join("survey.csv"))?),
            &self.surveys,
        )?;
        write_stringency_csv(
            BufWriter::new(File::create(dir.join("stringency.csv"))?),
            &self.stringency,
            "FIN",
        )?;
        let json = serde_json::to_string_pretty(&self.ground_truth)
            .map_err(|e| Error::model(format!("ground truth serialization: {e}")))?;
        std::fs::write(dir.join("ground_truth.json"), json)?;
        Ok(())
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

fn rng_for(seed: u64, stream: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(splitmix64(seed ^ stream.wrapping_mul(0xD1342543DE82EF95)))
}

fn categorical(rng: &mut ChaCha12Rng, probs: &[f64]) -> usize {
    let draw: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if draw < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Dirichlet draw via normalized gamma variates; +inf concentration
/// returns the mean exactly.
fn draw_simplex(rng: &mut ChaCha12Rng, mean: &[f64], concentration: f64) -> Vec<f64> {
    if concentration.is_infinite() {
        return mean.to_vec();
    }
    let mut draws = Vec::with_capacity(mean.len());
    for &m in mean {
        let shape = (m * concentration).max(1e-9);
        let gamma = Gamma::new(shape, 1.0).unwrap();
        draws.push(gamma.sample(rng).max(0.0));
    }
    let sum: f64 = draws.iter().sum();
    if sum <= 0.0 {
        return mean.to_vec();
    }
    draws.iter().map(|d| d / sum).collect()
}

/// Spread a day's segment proportions over hourly step counts. Zero-step
/// hours are omitted, like wearable exports do.
fn hourly_steps(
    participant_id: &str,
    date: NaiveDate,
    proportions: &[f64],
    total: u64,
    seg: &Segmentation,
) -> Vec<StepRecord> {
    let k = seg.k();
    let mut records = Vec::new();
    for (s, &share) in proportions.iter().enumerate() {
        let seg_start = seg.boundaries()[s];
        let seg_end = if s + 1 < k { seg.boundaries()[s + 1] } else { 24 };
        let hours = (seg_end - seg_start) as u64;
        let seg_total = (share * total as f64).round() as u64;
        let base = seg_total / hours;
        let mut rem = seg_total % hours;
        for h in seg_start..seg_end {
            let mut steps = base;
            if rem > 0 {
                steps += 1;
                rem -= 1;
            }
            if steps > 0 {
                records.push(StepRecord {
                    participant_id: participant_id.to_string(),
                    date,
                    hour: h,
                    steps,
                });
            }
        }
    }
    records
}

pub fn simulate_cohort(config: &CohortConfig) -> Result<Cohort> {
    config.validate()?;
    let seg = Segmentation::new(config.segment_boundaries.clone())?;

    // Stringency series: deterministic seasonal cycle plus seeded noise.
    let mut stringency = Vec::new();
    let mut monthly_stringency_sum: BTreeMap<YearMonth, (f64, usize)> = BTreeMap::new();
    {
        let mut rng = rng_for(config.seed, u64::MAX);
        let noise = Normal::new(0.0, 1.5).unwrap();
        let mut date = config.start;
        while date <= config.end {
            let t = (date - config.start).num_days() as f64;
            let cycle = (2.0 * std::f64::consts::PI * t / 365.25).cos();
            let index = (config.stringency_base
                + config.stringency_amplitude * cycle
                + noise.sample(&mut rng))
            .clamp(0.0, 100.0);
            stringency.push(StringencyPoint { date, index });
            let e = monthly_stringency_sum
                .entry(YearMonth::of(date))
                .or_insert((0.0, 0));
            e.0 += index;
            e.1 += 1;
            date = date.succ_opt().unwrap();
        }
    }
    let monthly_stringency: BTreeMap<YearMonth, f64> = monthly_stringency_sum
        .iter()
        .map(|(ym, (sum, n))| (*ym, sum / *n as f64))
        .collect();
    let stringency_mean: f64 =
        monthly_stringency.values().sum::<f64>() / monthly_stringency.len() as f64;

    let mut steps = Vec::new();
    let mut demographics = Vec::new();
    let mut surveys = Vec::new();
    let mut truths = Vec::new();

    let width = config.n_participants.to_string().len().max(3);
    for i in 0..config.n_participants {
        let pid = format!("p{:0width$}", i + 1, width = width);
        let mut rng = rng_for(config.seed, i as u64);

        let gender = match categorical(&mut rng, &config.gender_probs) {
            0 => Gender::Female,
            1 => Gender::Male,
            _ => Gender::NonBinary,
        };
        let role = match categorical(&mut rng, &config.role_probs) {
            0 => Role::Academic,
            _ => Role::Service,
        };
        let age_group = match categorical(&mut rng, &config.age_probs) {
            0 => AgeGroup::Young,
            1 => AgeGroup::Middle,
            _ => AgeGroup::Senior,
        };
        let origin = match categorical(&mut rng, &config.origin_probs) {
            0 => Origin::Finland,
            1 => Origin::EuropeOther,
            _ => Origin::OutsideEurope,
        };
        let live_alone = rng.random::<f64>() < config.live_alone_prob;
        let has_children = rng.random::<f64>() < config.has_children_prob;
        let profile = ParticipantProfile {
            participant_id: pid.clone(),
            gender,
            role,
            age_group,
            origin,
            live_alone,
            has_children,
        };
        let migrant = profile.migrant();
        demographics.push(profile);

        // Planted effects act multiplicatively on the concentration.
        let jitter = if config.concentration_jitter_sd > 0.0 {
            Normal::new(0.0, config.concentration_jitter_sd)
                .unwrap()
                .sample(&mut rng)
        } else {
            0.0
        };
        let concentration = if config.concentration.is_infinite() {
            f64::INFINITY
        } else {
            (config.concentration.ln()
                + jitter
                + if live_alone { config.live_alone_log_concentration } else { 0.0 }
                + if migrant { config.migrant_log_concentration } else { 0.0 })
            .exp()
        };

        // Per-participant archetypes, jittered around the cohort archetype.
        let workday_mean = draw_simplex(&mut rng, &config.workday_archetype, 200.0);
        let weekend_mean = draw_simplex(&mut rng, &config.weekend_archetype, 200.0);

        // Dropout: geometric in days.
        let last_day = if config.dropout_hazard > 0.0 {
            let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
            let offset = (-u.ln() / config.dropout_hazard).floor() as i64;
            (config.start + chrono::Duration::days(offset)).min(config.end)
        } else {
            config.end
        };

        let steps_dist = LogNormal::new(config.daily_steps_log_mean, config.daily_steps_log_sd)
            .map_err(|e| Error::Config(format!("daily steps distribution: {e}")))?;

        let mut day_distributions: Vec<DayDistribution> = Vec::new();
        let mut date = config.start;
        while date <= last_day {
            if rng.random::<f64>() < config.missing_day_prob {
                date = date.succ_opt().unwrap();
                continue;
            }
            let mean = match DayClass::of(date) {
                DayClass::Workday => &workday_mean,
                DayClass::Weekend => &weekend_mean,
            };
            let day_concentration = if config.seasonal_log_concentration != 0.0
                && concentration.is_finite()
            {
                let t = (date - config.start).num_days() as f64;
                concentration
                    * (config.seasonal_log_concentration
                        * (2.0 * std::f64::consts::PI * t / 365.25).cos())
                    .exp()
            } else {
                concentration
            };
            let proportions = draw_simplex(&mut rng, mean, day_concentration);
            let total = steps_dist.sample(&mut rng).round().max(500.0) as u64;
            let records = hourly_steps(&pid, date, &proportions, total, &seg);
            if let Some(dist) = build_day_distribution(&records, &seg)? {
                day_distributions.push(dist);
                steps.extend(records);
            }
            date = date.succ_opt().unwrap();
        }

        // Realized monthly long-term workday consistency drives the
        // on-site answers.
        let workdays: Vec<&DayDistribution> = day_distributions
            .iter()
            .filter(|d| d.day_class == DayClass::Workday)
            .collect();
        let long_baseline = if workdays.is_empty() {
            None
        } else {
            Some(baseline(&workdays, BaselineScope::LongTerm, DayClass::Workday)?)
        };
        let mut monthly_consistency: BTreeMap<YearMonth, (f64, usize)> = BTreeMap::new();
        if let Some(base) = &long_baseline {
            for d in &workdays {
                let value = long_term_consistency(d, base, config.epsilon)?;
                let e = monthly_consistency
                    .entry(YearMonth::of(d.date))
                    .or_insert((0.0, 0));
                e.0 += value;
                e.1 += 1;
            }
        }

        let onsite_noise = Normal::new(0.0, config.onsite_noise_sd)
            .map_err(|e| Error::Config(format!("onsite noise: {e}")))?;
        let activity_noise = Normal::new(0.0, config.activity_noise_sd)
            .map_err(|e| Error::Config(format!("activity noise: {e}")))?;
        let walking_pre = (config.walking_hours_mean + activity_noise.sample(&mut rng)).max(0.0);
        let nonwalking_pre =
            (config.nonwalking_hours_mean + activity_noise.sample(&mut rng)).max(0.0);

        let mut ym = YearMonth::of(config.start);
        let last_ym = YearMonth::of(last_day);
        let first_ym = ym;
        let mut month_index = 0;
        while ym <= last_ym {
            if let Some((sum, n)) = monthly_consistency.get(&ym) {
                let c_long = sum / *n as f64;
                let stringency_month = monthly_stringency.get(&ym).copied().unwrap_or(stringency_mean);
                let onsite_pct = (config.onsite_base
                    + config.onsite_consistency_slope * c_long
                    - config.stringency_onsite_effect * (stringency_month - stringency_mean)
                    + onsite_noise.sample(&mut rng))
                .clamp(0.0, 100.0);
                let leave_days = if config.mean_leave_days > 0.0 {
                    (Poisson::new(config.mean_leave_days).unwrap().sample(&mut rng) as u32)
                        .min(ym.days_in_month())
                } else {
                    0
                };
                let (stage, walking, nonwalking) = if ym == first_ym {
                    (Some(Stage::Pre), Some(walking_pre), Some(nonwalking_pre))
                } else if ym == first_ym.succ() {
                    (
                        Some(Stage::Early),
                        Some((walking_pre + activity_noise.sample(&mut rng)).max(0.0)),
                        Some(
                            (nonwalking_pre - config.early_nonwalking_drop
                                + activity_noise.sample(&mut rng))
                            .max(0.0),
                        ),
                    )
                } else if ym == last_ym && ym > first_ym.succ() {
                    (
                        Some(Stage::Late),
                        Some((walking_pre + activity_noise.sample(&mut rng)).max(0.0)),
                        Some(
                            (nonwalking_pre - 0.5 * config.early_nonwalking_drop
                                + activity_noise.sample(&mut rng))
                            .max(0.0),
                        ),
                    )
                } else {
                    (None, None, None)
                };
                surveys.push(SurveyResponse {
                    participant_id: pid.clone(),
                    year_month: ym,
                    onsite_pct,
                    leave_days,
                    walking_hours: walking.map(|v| (v * 100.0).round() / 100.0),
                    nonwalking_hours: nonwalking.map(|v| (v * 100.0).round() / 100.0),
                    stage,
                });
            }
            ym = ym.succ();
            month_index += 1;
        }
        let _ = month_index;

        truths.push(ParticipantTruth {
            participant_id: pid,
            live_alone,
            migrant,
            concentration,
            last_day,
        });
    }

    Ok(Cohort {
        steps,
        demographics,
        surveys,
        stringency,
        ground_truth: GroundTruth {
            config: config.clone(),
            participants: truths,
            monthly_stringency: monthly_stringency
                .iter()
                .map(|(ym, v)| (ym.to_string(), *v))
                .collect(),
        },
    })
}

/// Recovery verdict for one planted effect.
#[derive(Debug, Clone, Serialize)]
pub struct EffectRecovery {
    pub effect: String,
    /// Sign the generator planted (-1, 0, +1) on the model's scale.
    pub planted_sign: i8,
    pub estimate: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    /// CI excludes zero.
    pub detected: bool,
    pub sign_correct: bool,
}

/// Compare fitted coefficients against the planted directions. `effects`
/// pairs a coefficient name with the planted sign.
pub fn planted_effect_report(
    bootstrap: &crate::lmm::BootstrapResult,
    effects: &[(&str, i8)],
) -> Result<Vec<EffectRecovery>> {
    let mut out = Vec::new();
    for (name, planted_sign) in effects {
        let idx = bootstrap
            .coef_names
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::invalid(format!("coefficient {name:?} not in fit")))?;
        let estimate = bootstrap.estimate[idx];
        let (lo, hi) = (bootstrap.ci_lower[idx], bootstrap.ci_upper[idx]);
        let detected = lo > 0.0 || hi < 0.0;
        let sign_correct = match planted_sign {
            0 => true,
            s => estimate.signum() as i8 == *s,
        };
        out.push(EffectRecovery {
            effect: name.to_string(),
            planted_sign: *planted_sign,
            estimate,
            ci_lower: lo,
            ci_upper: hi,
            detected,
            sign_correct,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{parse_step_records, StepColumns};

    fn small_config() -> CohortConfig {
        CohortConfig {
            n_participants: 5,
            start: NaiveDate::from_ymd_opt(2021, 7, 1).unwrap(),
            end: NaiveDate::from_ymd_opt(2021, 9, 30).unwrap(),
            seed: 42,
            ..CohortConfig::default()
        }
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let config = small_config();
        let a = simulate_cohort(&config).unwrap();
        let b = simulate_cohort(&config).unwrap();
        assert_eq!(a.steps, b.steps);
        assert_eq!(a.surveys, b.surveys);
        assert_eq!(a.stringency, b.stringency);
    }

    #[test]
    fn different_seeds_differ() {
        let a = simulate_cohort(&small_config()).unwrap();
        let b = simulate_cohort(&CohortConfig {
            seed: 43,
            ..small_config()
        })
        .unwrap();
        assert_ne!(a.steps, b.steps);
    }

    #[test]
    fn generated_steps_pass_ingest_cleanly() {
        let cohort = simulate_cohort(&small_config()).unwrap();
        let mut buf = Vec::new();
        crate::ingest::write_step_csv(&mut buf, &cohort.steps).unwrap();
        let report = parse_step_records(buf.as_slice(), &StepColumns::default()).unwrap();
        assert_eq!(report.rejected.len(), 0);
        assert_eq!(report.accepted.len(), cohort.steps.len());
    }

    #[test]
    fn infinite_concentration_copies_the_archetype() {
        let config = CohortConfig {
            concentration: f64::INFINITY,
            concentration_jitter_sd: 0.0,
            missing_day_prob: 0.0,
            n_participants: 1,
            end: NaiveDate::from_ymd_opt(2021, 7, 14).unwrap(),
            ..small_config()
        };
        let cohort = simulate_cohort(&config).unwrap();
        let seg = Segmentation::default();
        // group by day, all workday distributions must be identical
        let mut by_day: BTreeMap<NaiveDate, Vec<StepRecord>> = BTreeMap::new();
        for r in &cohort.steps {
            by_day.entry(r.date).or_default().push(r.clone());
        }
        let mut workday_props: Vec<Vec<f64>> = Vec::new();
        for (_, records) in by_day {
            let d = build_day_distribution(&records, &seg).unwrap().unwrap();
            if d.day_class == DayClass::Workday {
                workday_props.push(d.proportions);
            }
        }
        assert!(workday_props.len() > 5);
        for w in &workday_props[1..] {
            for (a, b) in w.iter().zip(&workday_props[0]) {
                // integer rounding of hourly counts perturbs proportions
                // by at most ~1 step per hour
                assert!((a - b).abs() < 2e-3, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn invalid_config_is_rejected() {
        let bad = CohortConfig {
            concentration: 0.0,
            ..small_config()
        };
        assert!(simulate_cohort(&bad).is_err());
        let bad_probs = CohortConfig {
            gender_probs: vec![0.5, 0.6, 0.1],
            ..small_config()
        };
        assert!(simulate_cohort(&bad_probs).is_err());
    }

    #[test]
    fn higher_dispersion_lowers_long_term_consistency() {
        // One participant, two concentration levels, same seed stream.
        let mk = |conc: f64| CohortConfig {
            n_participants: 20,
            concentration: conc,
            concentration_jitter_sd: 0.0,
            missing_day_prob: 0.0,
            dropout_hazard: 0.0,
            end: NaiveDate::from_ymd_opt(2021, 8, 31).unwrap(),
            ..small_config()
        };
        let mean_c = |config: &CohortConfig| -> f64 {
            let cohort = simulate_cohort(config).unwrap();
            let seg = Segmentation::default();
            let mut by_pid_day: BTreeMap<(String, NaiveDate), Vec<StepRecord>> = BTreeMap::new();
            for r in &cohort.steps {
                by_pid_day
                    .entry((r.participant_id.clone(), r.date))
                    .or_default()
                    .push(r.clone());
            }
            let mut by_pid: BTreeMap<String, Vec<DayDistribution>> = BTreeMap::new();
            for ((pid, _), records) in by_pid_day {
                if let Some(d) = build_day_distribution(&records, &seg).unwrap() {
                    if d.day_class == DayClass::Workday {
                        by_pid.entry(pid).or_default().push(d);
                    }
                }
            }
            let mut values = Vec::new();
            for (_, days) in by_pid {
                let refs: Vec<&DayDistribution> = days.iter().collect();
                let base = baseline(&refs, BaselineScope::LongTerm, DayClass::Workday).unwrap();
                for d in &days {
                    values.push(long_term_consistency(d, &base, 1e-6).unwrap());
                }
            }
            values.iter().sum::<f64>() / values.len() as f64
        };
        let tight = mean_c(&mk(200.0));
        let loose = mean_c(&mk(10.0));
        assert!(
            tight > loose,
            "expected consistency to fall with dispersion: {tight} vs {loose}"
        );
    }
}
