//! Labeled HFO event simulation.
//!
//! An event is a short analysis window holding one or two Hann-windowed
//! sinusoidal bursts, optionally preceded by a spike transient (the first
//! derivative of a Gaussian), plus white Gaussian noise calibrated against
//! the burst power.
//!
//! Every event owns an independent random substream derived from
//! `(master_seed, event_id)`, so datasets regenerate bit-for-bit and events
//! can be produced in any order.

use std::f64::consts::PI;
use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::{mix, rng_from, Rng};

pub const RIPPLE_BAND_HZ: (f64, f64) = (80.0, 250.0);
pub const FAST_RIPPLE_BAND_HZ: (f64, f64) = (250.0, 500.0);

pub const DEFAULT_FS_HZ: f64 = 2048.0;
pub const DEFAULT_WINDOW_S: f64 = 0.3;

/// Width of the spike's Gaussian envelope, taken as four standard deviations.
pub const SPIKE_WIDTH_S: f64 = 0.020;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EventClass {
    Ripple,
    FastRipple,
    SpikeRipple,
    RippleAndFastRipple,
}

impl EventClass {
    pub const ALL: [EventClass; 4] = [
        EventClass::Ripple,
        EventClass::FastRipple,
        EventClass::SpikeRipple,
        EventClass::RippleAndFastRipple,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EventClass::Ripple => "Ripple",
            EventClass::FastRipple => "FastRipple",
            EventClass::SpikeRipple => "SpikeRipple",
            EventClass::RippleAndFastRipple => "RippleAndFastRipple",
        }
    }

    /// Band the primary burst frequency must fall in. The lower edge of the
    /// fast-ripple band is exclusive.
    fn primary_band(self) -> (f64, f64) {
        match self {
            EventClass::FastRipple => FAST_RIPPLE_BAND_HZ,
            _ => RIPPLE_BAND_HZ,
        }
    }
}

impl fmt::Display for EventClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EventClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EventClass::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown event class {s:?}")))
    }
}

fn in_band(freq: f64, class: EventClass) -> bool {
    let (lo, hi) = class.primary_band();
    if class == EventClass::FastRipple {
        freq > lo && freq <= hi
    } else {
        freq >= lo && freq <= hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    Sim1,
    Sim2,
    Imported,
}

impl Profile {
    /// Class set of a simulated profile, in class-index order.
    pub fn classes(self) -> Option<Vec<EventClass>> {
        use EventClass::*;
        match self {
            Profile::Sim1 => Some(vec![Ripple, FastRipple, SpikeRipple]),
            Profile::Sim2 => Some(vec![Ripple, FastRipple, RippleAndFastRipple]),
            Profile::Imported => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Profile::Sim1 => "sim1",
            Profile::Sim2 => "sim2",
            Profile::Imported => "imported",
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sim1" => Ok(Profile::Sim1),
            "sim2" => Ok(Profile::Sim2),
            "imported" => Ok(Profile::Imported),
            _ => Err(Error::invalid(format!("unknown profile {s:?}"))),
        }
    }
}

/// Noise level of an event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Snr {
    Clean,
    Db(f64),
}

impl fmt::Display for Snr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Snr::Clean => f.write_str("clean"),
            Snr::Db(db) => write!(f, "{db}"),
        }
    }
}

impl FromStr for Snr {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "clean" {
            return Ok(Snr::Clean);
        }
        let db: f64 = s
            .parse()
            .map_err(|_| Error::invalid(format!("bad SNR {s:?}")))?;
        if !db.is_finite() {
            return Err(Error::invalid("SNR must be finite or \"clean\""));
        }
        Ok(Snr::Db(db))
    }
}

/// The fast-ripple burst carried by a `RippleAndFastRipple` event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecondBurst {
    pub freq_hz: f64,
    pub dur_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventParams {
    pub osc_freq_hz: f64,
    pub burst_dur_s: f64,
    /// Spike peak amplitude relative to the unit-amplitude burst. Only
    /// `SpikeRipple` events carry a spike.
    pub rel_amplitude: f64,
    pub snr: Snr,
    /// 1 puts the spike (or second burst) center on the burst center, 0
    /// offsets it by a full burst duration (half for the second burst).
    pub overlap_frac: f64,
    pub fs_hz: f64,
    pub window_s: f64,
    pub second: Option<SecondBurst>,
}

impl EventParams {
    pub fn new(osc_freq_hz: f64, burst_dur_s: f64) -> Self {
        EventParams {
            osc_freq_hz,
            burst_dur_s,
            rel_amplitude: 0.0,
            snr: Snr::Clean,
            overlap_frac: 1.0,
            fs_hz: DEFAULT_FS_HZ,
            window_s: DEFAULT_WINDOW_S,
            second: None,
        }
    }

    pub fn n_samples(&self) -> usize {
        window_len(self.fs_hz, self.window_s)
    }

    pub fn validate(&self, class: EventClass) -> Result<()> {
        let finite = [
            self.osc_freq_hz,
            self.burst_dur_s,
            self.rel_amplitude,
            self.overlap_frac,
            self.fs_hz,
            self.window_s,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("event parameters must be finite"));
        }
        if self.fs_hz <= 0.0 || self.window_s <= 0.0 {
            return Err(Error::invalid("sampling rate and window must be positive"));
        }
        let nyquist = self.fs_hz / 2.0;
        let check_freq = |freq: f64, class: EventClass| -> Result<()> {
            if freq >= nyquist {
                return Err(Error::invalid(format!(
                    "frequency {freq} Hz is at or above Nyquist ({nyquist} Hz)"
                )));
            }
            if !in_band(freq, class) {
                return Err(Error::invalid(format!(
                    "frequency {freq} Hz outside the {class} band"
                )));
            }
            Ok(())
        };
        check_freq(self.osc_freq_hz, class)?;
        let check_dur = |dur: f64| -> Result<()> {
            if !(dur > 0.0 && dur < self.window_s) {
                return Err(Error::invalid(format!(
                    "burst duration {dur} s must lie in (0, window)"
                )));
            }
            Ok(())
        };
        check_dur(self.burst_dur_s)?;
        if self.rel_amplitude < 0.0 {
            return Err(Error::invalid("relative amplitude must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.overlap_frac) {
            return Err(Error::invalid("overlap fraction must lie in [0, 1]"));
        }
        if let Snr::Db(db) = self.snr {
            if !db.is_finite() {
                return Err(Error::invalid("SNR must be finite or clean"));
            }
        }
        match (class, self.second) {
            (EventClass::RippleAndFastRipple, Some(second)) => {
                check_freq(second.freq_hz, EventClass::FastRipple)?;
                check_dur(second.dur_s)?;
            }
            (EventClass::RippleAndFastRipple, None) => {
                return Err(Error::invalid(
                    "RippleAndFastRipple needs a fast-ripple burst",
                ));
            }
            (_, Some(_)) => {
                return Err(Error::invalid(format!("{class} carries a single burst")));
            }
            (_, None) => {}
        }
        if self.n_samples() == 0 {
            return Err(Error::invalid("window holds no samples"));
        }
        Ok(())
    }

    fn center_s(&self) -> f64 {
        (self.n_samples() as f64 / 2.0) / self.fs_hz
    }

    fn spike_center_s(&self) -> f64 {
        self.center_s() - (1.0 - self.overlap_frac) * self.burst_dur_s
    }

    fn second_center_s(&self, second: &SecondBurst) -> f64 {
        self.center_s() + (1.0 - self.overlap_frac) * second.dur_s / 2.0
    }
}

/// `floor(fs * window)`, tolerant of representation error in the product.
pub fn window_len(fs_hz: f64, window_s: f64) -> usize {
    let n = (fs_hz * window_s + 1e-9).floor();
    if n.is_finite() && n > 0.0 {
        n as usize
    } else {
        0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignalSegment {
    pub samples: Vec<f64>,
    pub fs_hz: f64,
    pub label: EventClass,
    pub event_id: u64,
    pub params: EventParams,
}

impl SignalSegment {
    /// Sample range covered by the burst(s).
    pub fn burst_support(&self) -> Range<usize> {
        burst_support(&self.params, self.samples.len())
    }
}

fn hann_burst(out: &mut [f64], fs: f64, center_s: f64, freq: f64, dur: f64, phase: f64) {
    for (n, v) in out.iter_mut().enumerate() {
        let dt = n as f64 / fs - center_s;
        if dt.abs() <= dur / 2.0 {
            let w = 0.5 * (1.0 - (2.0 * PI * (dt / dur + 0.5)).cos());
            *v = (2.0 * PI * freq * dt + phase).sin() * w;
        } else {
            *v = 0.0;
        }
    }
}

fn support_of(fs: f64, center_s: f64, dur: f64, len: usize) -> Range<usize> {
    let lo = ((center_s - dur / 2.0) * fs).ceil().max(0.0) as usize;
    let hi = (((center_s + dur / 2.0) * fs).floor() as usize + 1).min(len);
    lo.min(hi)..hi
}

/// Samples spanned by the burst(s) of an event with the given parameters.
pub fn burst_support(params: &EventParams, len: usize) -> Range<usize> {
    let fs = params.fs_hz;
    let mut r = support_of(fs, params.center_s(), params.burst_dur_s, len);
    if let Some(second) = &params.second {
        let s = support_of(fs, params.second_center_s(second), second.dur_s, len);
        r = r.start.min(s.start)..r.end.max(s.end);
    }
    r
}

/// The spike transient alone (all zeros when `rel_amplitude` is 0).
pub fn spike_component(params: &EventParams) -> Vec<f64> {
    let sigma = SPIKE_WIDTH_S / 4.0;
    let center = params.spike_center_s();
    (0..params.n_samples())
        .map(|n| {
            let u = (n as f64 / params.fs_hz - center) / sigma;
            // extrema at u = -1 (+1) and u = +1 (-1)
            params.rel_amplitude * (-u * (0.5 * (1.0 - u * u)).exp())
        })
        .collect()
}

/// The oscillatory burst(s) alone. Phases come from the event seed.
pub fn burst_component(class: EventClass, params: &EventParams, seed: u64) -> Vec<f64> {
    let mut rng = rng_from(seed);
    let phase1 = rng.random::<f64>() * 2.0 * PI;
    let phase2 = rng.random::<f64>() * 2.0 * PI;
    let n = params.n_samples();
    let mut out = vec![0.0; n];
    hann_burst(
        &mut out,
        params.fs_hz,
        params.center_s(),
        params.osc_freq_hz,
        params.burst_dur_s,
        phase1,
    );
    if class == EventClass::RippleAndFastRipple {
        if let Some(second) = &params.second {
            let mut fr = vec![0.0; n];
            hann_burst(
                &mut fr,
                params.fs_hz,
                params.second_center_s(second),
                second.freq_hz,
                second.dur_s,
                phase2,
            );
            for (o, f) in out.iter_mut().zip(&fr) {
                *o += f;
            }
        }
    }
    out
}

/// Generates the noiseless waveform of one event.
pub fn gen_event(class: EventClass, params: &EventParams, seed: u64) -> Result<SignalSegment> {
    params.validate(class)?;
    let mut samples = burst_component(class, params, seed);
    if class == EventClass::SpikeRipple {
        let spike = spike_component(params);
        for (s, p) in samples.iter_mut().zip(&spike) {
            *s += p;
        }
    }
    Ok(SignalSegment {
        samples,
        fs_hz: params.fs_hz,
        label: class,
        event_id: 0,
        params: EventParams {
            snr: Snr::Clean,
            ..*params
        },
    })
}

fn mean_power(x: &[f64]) -> f64 {
    if x.is_empty() {
        0.0
    } else {
        x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
    }
}

/// Adds white Gaussian noise whose power over the burst support sits exactly
/// `snr_db` below the clean signal power over the same support.
pub fn add_noise(clean: &SignalSegment, snr: Snr, seed: u64) -> Result<SignalSegment> {
    if clean.samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("signal contains non-finite samples"));
    }
    let db = match snr {
        Snr::Clean => return Ok(clean.clone()),
        Snr::Db(db) if db.is_finite() => db,
        Snr::Db(_) => return Err(Error::invalid("SNR must be finite or clean")),
    };
    let mut rng = rng_from(seed);
    let noise: Vec<f64> = (0..clean.samples.len())
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    let support = clean.burst_support();
    let support = if support.is_empty() {
        0..clean.samples.len()
    } else {
        support
    };
    let p_signal = mean_power(&clean.samples[support.clone()]);
    let p_noise = mean_power(&noise[support]);
    let mut out = clean.clone();
    out.params.snr = snr;
    if p_signal == 0.0 || p_noise == 0.0 {
        return Ok(out);
    }
    let scale = (p_signal / (p_noise * 10f64.powf(db / 10.0))).sqrt();
    for (s, n) in out.samples.iter_mut().zip(&noise) {
        *s += scale * n;
    }
    Ok(out)
}

/// How one event parameter is drawn across a dataset.
#[derive(Debug, Clone, PartialEq)]
pub enum Sampling {
    Uniform { lo: f64, hi: f64 },
    Choice(Vec<f64>),
}

impl Sampling {
    pub fn fixed(v: f64) -> Self {
        Sampling::Choice(vec![v])
    }

    fn validate(&self, what: &str) -> Result<()> {
        let ok = match self {
            Sampling::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo <= hi,
            Sampling::Choice(v) => !v.is_empty() && v.iter().all(|x| x.is_finite()),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("empty or invalid range for {what}")))
        }
    }

    fn draw(&self, rng: &mut Rng) -> f64 {
        match self {
            Sampling::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            Sampling::Choice(v) => v[rng.random_range(0..v.len())],
        }
    }

    fn bounds(&self) -> (f64, f64) {
        match self {
            Sampling::Uniform { lo, hi } => (*lo, *hi),
            Sampling::Choice(v) => v
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| {
                    (a.min(x), b.max(x))
                }),
        }
    }
}

/// `lo..hi` for a uniform range, `a|b|c` for a discrete choice.
impl fmt::Display for Sampling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sampling::Uniform { lo, hi } => write!(f, "{lo}..{hi}"),
            Sampling::Choice(v) => {
                let parts: Vec<String> = v.iter().map(|x| x.to_string()).collect();
                f.write_str(&parts.join("|"))
            }
        }
    }
}

impl FromStr for Sampling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let num = |t: &str| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::invalid(format!("bad number {t:?} in range {s:?}")))
        };
        let sampling = if let Some((lo, hi)) = s.split_once("..") {
            Sampling::Uniform {
                lo: num(lo)?,
                hi: num(hi)?,
            }
        } else {
            Sampling::Choice(s.split('|').map(num).collect::<Result<_>>()?)
        };
        sampling.validate(s)?;
        Ok(sampling)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamRanges {
    pub ripple_freq_hz: Sampling,
    pub fast_ripple_freq_hz: Sampling,
    pub ripple_dur_s: Sampling,
    pub fast_ripple_dur_s: Sampling,
    pub rel_amplitude: Sampling,
    pub overlap_frac: Sampling,
    /// `None` generates clean events.
    pub snr_db: Option<Sampling>,
}

impl Default for ParamRanges {
    fn default() -> Self {
        ParamRanges {
            ripple_freq_hz: Sampling::Choice(vec![85.0, 105.0, 200.0]),
            fast_ripple_freq_hz: Sampling::Choice(vec![350.0, 450.0]),
            ripple_dur_s: Sampling::Uniform {
                lo: 0.040,
                hi: 0.120,
            },
            fast_ripple_dur_s: Sampling::Uniform {
                lo: 0.020,
                hi: 0.060,
            },
            rel_amplitude: Sampling::Uniform { lo: 1.5, hi: 3.0 },
            overlap_frac: Sampling::Uniform { lo: 0.5, hi: 1.0 },
            snr_db: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenSpec {
    pub profile: Profile,
    pub per_class: usize,
    pub fs_hz: f64,
    pub window_s: f64,
    pub master_seed: u64,
    pub ranges: ParamRanges,
}

impl GenSpec {
    pub fn new(profile: Profile, per_class: usize, master_seed: u64) -> Self {
        GenSpec {
            profile,
            per_class,
            fs_hz: DEFAULT_FS_HZ,
            window_s: DEFAULT_WINDOW_S,
            master_seed,
            ranges: ParamRanges::default(),
        }
    }

    fn validate(&self) -> Result<Vec<EventClass>> {
        let classes = self
            .profile
            .classes()
            .ok_or_else(|| Error::invalid("cannot simulate the imported profile"))?;
        if self.per_class == 0 {
            return Err(Error::invalid("per-class count must be at least 1"));
        }
        let r = &self.ranges;
        r.ripple_freq_hz.validate("ripple frequency")?;
        r.fast_ripple_freq_hz.validate("fast-ripple frequency")?;
        r.ripple_dur_s.validate("ripple duration")?;
        r.fast_ripple_dur_s.validate("fast-ripple duration")?;
        r.rel_amplitude.validate("relative amplitude")?;
        r.overlap_frac.validate("overlap")?;
        if let Some(snr) = &r.snr_db {
            snr.validate("SNR")?;
        }
        let within = |s: &Sampling, class: EventClass, what: &str| -> Result<()> {
            let (lo, hi) = s.bounds();
            if in_band(lo, class) && in_band(hi, class) {
                Ok(())
            } else {
                Err(Error::invalid(format!(
                    "{what} range {s} leaves the {class} band"
                )))
            }
        };
        within(&r.ripple_freq_hz, EventClass::Ripple, "ripple frequency")?;
        within(
            &r.fast_ripple_freq_hz,
            EventClass::FastRipple,
            "fast-ripple frequency",
        )?;
        Ok(classes)
    }

    fn draw_params(&self, class: EventClass, rng: &mut Rng) -> EventParams {
        let r = &self.ranges;
        // every draw happens for every class so substreams stay aligned
        let ripple_f = r.ripple_freq_hz.draw(rng);
        let fr_f = r.fast_ripple_freq_hz.draw(rng);
        let ripple_d = r.ripple_dur_s.draw(rng);
        let fr_d = r.fast_ripple_dur_s.draw(rng);
        let rel_amplitude = r.rel_amplitude.draw(rng);
        let overlap_frac = r.overlap_frac.draw(rng);
        let snr = match &r.snr_db {
            Some(s) => Snr::Db(s.draw(rng)),
            None => Snr::Clean,
        };
        let (osc_freq_hz, burst_dur_s) = match class {
            EventClass::FastRipple => (fr_f, fr_d),
            _ => (ripple_f, ripple_d),
        };
        EventParams {
            osc_freq_hz,
            burst_dur_s,
            rel_amplitude: if class == EventClass::SpikeRipple {
                rel_amplitude
            } else {
                0.0
            },
            snr,
            overlap_frac,
            fs_hz: self.fs_hz,
            window_s: self.window_s,
            second: (class == EventClass::RippleAndFastRipple).then_some(SecondBurst {
                freq_hz: fr_f,
                dur_s: fr_d,
            }),
        }
    }

    /// Generates event `event_id` of the dataset this spec describes.
    pub fn gen_one(&self, class: EventClass, event_id: u64) -> Result<SignalSegment> {
        let event_seed = mix(self.master_seed, event_id);
        let mut param_rng = rng_from(mix(event_seed, 0));
        let params = self.draw_params(class, &mut param_rng);
        let clean = gen_event(class, &params, mix(event_seed, 1))?;
        let mut seg = add_noise(&clean, params.snr, mix(event_seed, 2))?;
        seg.event_id = event_id;
        Ok(seg)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub segments: Vec<SignalSegment>,
    pub profile: Profile,
    pub master_seed: u64,
    pub class_names: Vec<EventClass>,
    /// Present when the dataset was simulated.
    pub gen_spec: Option<GenSpec>,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_index(&self, class: EventClass) -> Option<usize> {
        self.class_names.iter().position(|&c| c == class)
    }

    /// Class index of every segment, in dataset order.
    pub fn labels(&self) -> Result<Vec<usize>> {
        self.segments
            .iter()
            .map(|s| {
                self.class_index(s.label).ok_or_else(|| {
                    Error::invalid(format!("label {} not in the dataset class set", s.label))
                })
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(classes) = self.profile.classes() {
            if classes != self.class_names {
                return Err(Error::invalid(format!(
                    "class set does not match profile {}",
                    self.profile
                )));
            }
        }
        for (i, seg) in self.segments.iter().enumerate() {
            if seg.event_id != i as u64 {
                return Err(Error::invalid(format!(
                    "event ids must be contiguous from 0 (position {i} has id {})",
                    seg.event_id
                )));
            }
            if seg.samples.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("event {i} has non-finite samples")));
            }
        }
        self.labels().map(|_| ())
    }
}

/// Generates `per_class` events for each class of the profile, class-major.
pub fn gen_dataset(spec: &GenSpec) -> Result<LabeledDataset> {
    let classes = spec.validate()?;
    let jobs: Vec<(EventClass, u64)> = classes
        .iter()
        .flat_map(|&c| std::iter::repeat_n(c, spec.per_class))
        .enumerate()
        .map(|(i, c)| (c, i as u64))
        .collect();
    #[cfg(feature = "parallel")]
    let segments = {
        use rayon::prelude::*;
        jobs.par_iter()
            .map(|&(c, id)| spec.gen_one(c, id))
            .collect::<Result<Vec<_>>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let segments = jobs
        .iter()
        .map(|&(c, id)| spec.gen_one(c, id))
        .collect::<Result<Vec<_>>>()?;
    Ok(LabeledDataset {
        segments,
        profile: spec.profile,
        master_seed: spec.master_seed,
        class_names: classes,
        gen_spec: Some(spec.clone()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ripple(freq: f64) -> EventParams {
        EventParams::new(freq, 0.08)
    }

    #[test]
    fn window_length_is_floor_of_fs_times_window() {
        let seg = gen_event(EventClass::Ripple, &ripple(105.0), 1).unwrap();
        assert_eq!(seg.samples.len(), 614);
        assert_eq!(window_len(1000.0, 0.3), 300);
    }

    #[test]
    fn spike_ripple_without_spike_is_a_ripple() {
        let mut p = ripple(105.0);
        p.rel_amplitude = 0.0;
        let r = gen_event(EventClass::Ripple, &p, 9).unwrap();
        let sr = gen_event(EventClass::SpikeRipple, &p, 9).unwrap();
        assert_eq!(r.samples, sr.samples);
    }

    #[test]
    fn spike_ripple_is_spike_plus_burst() {
        let mut p = ripple(200.0);
        p.rel_amplitude = 2.5;
        p.overlap_frac = 0.6;
        let sr = gen_event(EventClass::SpikeRipple, &p, 4).unwrap();
        let spike = spike_component(&p);
        let burst = burst_component(EventClass::SpikeRipple, &p, 4);
        for i in 0..sr.samples.len() {
            assert_eq!(sr.samples[i], spike[i] + burst[i]);
        }
        let peak = spike.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        assert!((peak - 2.5).abs() < 0.01, "spike peak {peak}");
    }

    #[test]
    fn band_and_nyquist_errors() {
        assert!(gen_event(EventClass::Ripple, &ripple(300.0), 0).is_err());
        assert!(gen_event(EventClass::FastRipple, &ripple(200.0), 0).is_err());
        let mut p = ripple(450.0);
        p.fs_hz = 512.0;
        assert!(matches!(
            gen_event(EventClass::FastRipple, &p, 0),
            Err(Error::InvalidParameter(_))
        ));
        let mut p = ripple(100.0);
        p.burst_dur_s = 0.5;
        assert!(gen_event(EventClass::Ripple, &p, 0).is_err());
        assert!(gen_event(EventClass::RippleAndFastRipple, &ripple(100.0), 0).is_err());
    }

    #[test]
    fn ripple_and_fast_ripple_has_both_bursts() {
        let mut p = ripple(105.0);
        p.second = Some(SecondBurst {
            freq_hz: 450.0,
            dur_s: 0.04,
        });
        let seg = gen_event(EventClass::RippleAndFastRipple, &p, 2).unwrap();
        let only_r = burst_component(EventClass::Ripple, &p, 2);
        assert_ne!(seg.samples, only_r);
    }

    #[test]
    fn clean_noise_is_identity_and_nonfinite_rejected() {
        let seg = gen_event(EventClass::Ripple, &ripple(105.0), 1).unwrap();
        assert_eq!(add_noise(&seg, Snr::Clean, 3).unwrap(), seg);
        assert!(add_noise(&seg, Snr::Db(f64::NAN), 3).is_err());
        assert!(add_noise(&seg, Snr::Db(f64::INFINITY), 3).is_err());
        assert!("inf".parse::<Snr>().is_err());
    }

    #[test]
    fn noise_is_seeded() {
        let seg = gen_event(EventClass::Ripple, &ripple(105.0), 1).unwrap();
        let a = add_noise(&seg, Snr::Db(5.0), 11).unwrap();
        let b = add_noise(&seg, Snr::Db(5.0), 11).unwrap();
        let c = add_noise(&seg, Snr::Db(5.0), 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn dataset_counts_and_ids() {
        let ds = gen_dataset(&GenSpec::new(Profile::Sim2, 10, 5)).unwrap();
        assert_eq!(ds.len(), 30);
        for class in [
            EventClass::Ripple,
            EventClass::FastRipple,
            EventClass::RippleAndFastRipple,
        ] {
            assert_eq!(ds.segments.iter().filter(|s| s.label == class).count(), 10);
        }
        ds.validate().unwrap();
    }

    #[test]
    fn dataset_rejects_bad_specs() {
        assert!(gen_dataset(&GenSpec::new(Profile::Sim1, 0, 1)).is_err());
        assert!(gen_dataset(&GenSpec::new(Profile::Imported, 3, 1)).is_err());
        let mut spec = GenSpec::new(Profile::Sim1, 3, 1);
        spec.ranges.ripple_dur_s = Sampling::Uniform { lo: 0.1, hi: 0.05 };
        assert!(gen_dataset(&spec).is_err());
        let mut spec = GenSpec::new(Profile::Sim1, 3, 1);
        spec.ranges.ripple_freq_hz = Sampling::Choice(vec![]);
        assert!(gen_dataset(&spec).is_err());
        let mut spec = GenSpec::new(Profile::Sim1, 3, 1);
        spec.ranges.fast_ripple_freq_hz = Sampling::Uniform {
            lo: 200.0,
            hi: 400.0,
        };
        assert!(gen_dataset(&spec).is_err());
    }

    #[test]
    fn sampling_text_round_trip() {
        for s in ["85|105|200", "0.04..0.12", "7"] {
            let parsed: Sampling = s.parse().unwrap();
            assert_eq!(parsed.to_string(), s);
        }
        assert!("".parse::<Sampling>().is_err());
        assert!("3..1".parse::<Sampling>().is_err());
    }
}
