//! Dataset text files, PGM export of scalograms, and binary model files.
//!
//! # Dataset file
//!
//! Line 1 is a header of space-separated `key=value` pairs:
//! `format=hfo-dataset version=1 profile=sim1 fs_hz=2048 window_s=0.3
//! master_seed=7 classes=Ripple|FastRipple|SpikeRipple count=600`, followed
//! for simulated data by the generation keys `per_class`, `ripple_freq_hz`,
//! `fast_ripple_freq_hz`, `ripple_dur_s`, `fast_ripple_dur_s`,
//! `rel_amplitude`, `overlap_frac` and `snr_db` (ranges as `lo..hi` or
//! `a|b|c`, `none` for clean data).
//!
//! Every following line is one segment:
//! `event_id,label,freq;dur;rel_amplitude;snr;overlap;freq2;dur2,s0,s1,...`
//! where `snr` is `clean` or a dB value and `freq2;dur2` are `-` for events
//! without a second burst. Numbers use the shortest decimal form that reads
//! back to the same `f64`.
//!
//! # Model file
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! magic      8 bytes  "HFOMODEL"
//! version    u32      1
//! kind       u8       0 svm, 1 cnn, 2 hybrid
//! data_seed  u64
//! classes    u32 count, then one u8 per class (0 Ripple, 1 FastRipple,
//!            2 SpikeRipple, 3 RippleAndFastRipple)
//! scalogram  u32 size, f64 fmin_hz, f64 fmax_hz, u32 voices
//! config     u64 seed, u8 coding, u32 pool_size,
//!            u8 kernel (0 linear, 1 rbf with default gamma, 2 rbf), f64 gamma,
//!            f64 c, f64 tol, u32 max_epochs, u64 svm_seed, u8 standardize,
//!            f64 lr, u32 batch_size, u32 epochs, f64 beta1, f64 beta2,
//!            f64 eps, u64 net_seed, u8 has_arch, [arch]
//! body       svm:    u32 pool_size, ecoc
//!            cnn:    net
//!            hybrid: net, ecoc
//! ```
//!
//! `ecoc` is `u8 scheme (0 ova, 1 ovo, 2 exhaustive), u32 rows, u32 classes,
//! rows*classes i8 entries, u32 dim`, then one binary SVM per row:
//! `u8 kernel (0 linear, 1 rbf), f64 gamma, f64 c, f64 bias, u32 dim,
//! u8 standardized, [dim f64 mean, dim f64 inv_std], u32 n_sv,
//! n_sv*dim f64 support vectors, n_sv f64 signed alphas`.
//!
//! `arch` is `u32 input_size, u32 stages`, one stage each as `u8 tag` plus
//! three u32 fields (conv: kernel, out_channels, stride; maxpool: window;
//! residual: channels; dense: width; softmax head: classes; unused fields
//! zero). `net` is an `arch` followed by `u32 groups` and per group
//! `u32 name_len, name bytes, u32 len, len f64 values`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::convnet::{ConvNet, ConvNetArch, LayerSpec, ParamGroup, TrainHyper};
use crate::ecoc::{CodeMatrix, CodingScheme, EcocModel};
use crate::error::{Error, Result};
use crate::pipeline::{
    CnnModel, HybridModel, ModelBody, ModelKind, SvmModel, TrainConfig, TrainedModel,
};
use crate::simgen::{
    window_len, EventClass, EventParams, GenSpec, LabeledDataset, ParamRanges, Profile, Sampling,
    SecondBurst, SignalSegment, Snr,
};
use crate::svm::{BinarySvmModel, KernelChoice, KernelSpec, Standardizer, SvmConfig};
use crate::tfr::{ScalogramConfig, TimeFrequencyMap};

pub const DATASET_FORMAT: &str = "hfo-dataset";
pub const DATASET_VERSION: u32 = 1;
pub const MODEL_MAGIC: &[u8; 8] = b"HFOMODEL";
pub const MODEL_VERSION: u32 = 1;

/// Text form of a dataset.
pub fn dataset_to_string(ds: &LabeledDataset) -> Result<String> {
    ds.validate()?;
    let (fs_hz, window_s) = match ds.segments.first() {
        Some(s) => (s.params.fs_hz, s.params.window_s),
        None => match &ds.gen_spec {
            Some(g) => (g.fs_hz, g.window_s),
            None => return Err(Error::Empty("dataset has no segments".into())),
        },
    };
    let classes: Vec<&str> = ds.class_names.iter().map(|c| c.name()).collect();
    let mut out = format!(
        "format={DATASET_FORMAT} version={DATASET_VERSION} profile={} fs_hz={fs_hz} window_s={window_s} master_seed={} classes={} count={}",
        ds.profile,
        ds.master_seed,
        classes.join("|"),
        ds.len()
    );
    if let Some(g) = &ds.gen_spec {
        let r = &g.ranges;
        let snr = r
            .snr_db
            .as_ref()
            .map_or("none".to_string(), |s| s.to_string());
        let _ = write!(
            out,
            " per_class={} ripple_freq_hz={} fast_ripple_freq_hz={} ripple_dur_s={} fast_ripple_dur_s={} rel_amplitude={} overlap_frac={} snr_db={snr}",
            g.per_class,
            r.ripple_freq_hz,
            r.fast_ripple_freq_hz,
            r.ripple_dur_s,
            r.fast_ripple_dur_s,
            r.rel_amplitude,
            r.overlap_frac,
        );
    }
    out.push('\n');
    for seg in &ds.segments {
        let p = &seg.params;
        if seg.fs_hz != fs_hz || p.fs_hz != fs_hz || p.window_s != window_s {
            return Err(Error::invalid(format!(
                "event {} differs from the dataset sampling rate or window",
                seg.event_id
            )));
        }
        let (f2, d2) = match p.second {
            Some(b) => (b.freq_hz.to_string(), b.dur_s.to_string()),
            None => ("-".into(), "-".into()),
        };
        let _ = write!(
            out,
            "{},{},{};{};{};{};{};{f2};{d2}",
            seg.event_id,
            seg.label,
            p.osc_freq_hz,
            p.burst_dur_s,
            p.rel_amplitude,
            p.snr,
            p.overlap_frac
        );
        for v in &seg.samples {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn write_dataset(ds: &LabeledDataset, path: &Path) -> Result<()> {
    fs::write(path, dataset_to_string(ds)?)?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<LabeledDataset> {
    parse_dataset(&fs::read_to_string(path)?)
}

fn perr(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

struct Header<'a> {
    pairs: Vec<(&'a str, &'a str)>,
}

impl<'a> Header<'a> {
    fn get(&self, key: &str) -> Option<&'a str> {
        self.pairs.iter().find(|(k, _)| *k == key).map(|(_, v)| *v)
    }

    fn req(&self, key: &str) -> Result<&'a str> {
        self.get(key)
            .ok_or_else(|| perr(1, format!("header is missing '{key}'")))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let v = self.req(key)?;
        v.parse()
            .map_err(|_| perr(1, format!("bad value {v:?} for '{key}'")))
    }

    fn sampling(&self, key: &str) -> Result<Sampling> {
        self.req(key)?
            .parse()
            .map_err(|e| perr(1, format!("'{key}': {e}")))
    }
}

pub fn parse_dataset(text: &str) -> Result<LabeledDataset> {
    let mut lines = text.lines();
    let header_line = lines.next().ok_or_else(|| perr(1, "empty file"))?;
    let pairs = header_line
        .split_whitespace()
        .map(|kv| {
            kv.split_once('=')
                .ok_or_else(|| perr(1, format!("expected key=value, found {kv:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let h = Header { pairs };
    if h.req("format")? != DATASET_FORMAT {
        return Err(perr(1, "not an hfo-dataset file"));
    }
    let version: u32 = h.parse("version")?;
    if version != DATASET_VERSION {
        return Err(Error::Version {
            found: version,
            expected: DATASET_VERSION,
        });
    }
    let profile: Profile = h
        .req("profile")?
        .parse()
        .map_err(|e| perr(1, format!("{e}")))?;
    let fs_hz: f64 = h.parse("fs_hz")?;
    let window_s: f64 = h.parse("window_s")?;
    let master_seed: u64 = h.parse("master_seed")?;
    let count: usize = h.parse("count")?;
    let class_names = h
        .req("classes")?
        .split('|')
        .map(|c| c.parse::<EventClass>().map_err(|e| perr(1, e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    let gen_spec = match h.get("per_class") {
        None => None,
        Some(_) => Some(GenSpec {
            profile,
            per_class: h.parse("per_class")?,
            fs_hz,
            window_s,
            master_seed,
            ranges: ParamRanges {
                ripple_freq_hz: h.sampling("ripple_freq_hz")?,
                fast_ripple_freq_hz: h.sampling("fast_ripple_freq_hz")?,
                ripple_dur_s: h.sampling("ripple_dur_s")?,
                fast_ripple_dur_s: h.sampling("fast_ripple_dur_s")?,
                rel_amplitude: h.sampling("rel_amplitude")?,
                overlap_frac: h.sampling("overlap_frac")?,
                snr_db: match h.req("snr_db")? {
                    "none" => None,
                    _ => Some(h.sampling("snr_db")?),
                },
            },
        }),
    };
    let n = window_len(fs_hz, window_s);
    let mut segments = Vec::with_capacity(count);
    let mut last_line = 1;
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        last_line = lineno;
        if line.is_empty() {
            return Err(perr(lineno, "empty record"));
        }
        let seg = parse_record(line, lineno, fs_hz, window_s, n)?;
        if !class_names.contains(&seg.label) {
            return Err(perr(
                lineno,
                format!("label {} is not in the class list", seg.label),
            ));
        }
        segments.push(seg);
    }
    if segments.len() != count {
        return Err(perr(
            last_line + 1,
            format!("expected {count} records, found {}", segments.len()),
        ));
    }
    let ds = LabeledDataset {
        segments,
        profile,
        master_seed,
        class_names,
        gen_spec,
    };
    ds.validate()?;
    Ok(ds)
}

fn parse_record(
    line: &str,
    lineno: usize,
    fs_hz: f64,
    window_s: f64,
    n: usize,
) -> Result<SignalSegment> {
    let mut fields = line.split(',');
    let mut next = |what: &str| {
        fields
            .next()
            .ok_or_else(|| perr(lineno, format!("missing {what}")))
    };
    let num = |s: &str| -> Result<f64> {
        s.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| perr(lineno, format!("bad number {s:?}")))
    };
    let event_id: u64 = next("event id")?
        .parse()
        .map_err(|_| perr(lineno, "bad event id"))?;
    let label: EventClass = next("label")?
        .parse()
        .map_err(|e: Error| perr(lineno, e.to_string()))?;
    let params_field = next("parameters")?;
    let p: Vec<&str> = params_field.split(';').collect();
    if p.len() != 7 {
        return Err(perr(
            lineno,
            format!("expected 7 parameters, found {}", p.len()),
        ));
    }
    let snr: Snr = p[3]
        .parse()
        .map_err(|e: Error| perr(lineno, e.to_string()))?;
    let second = match (p[5], p[6]) {
        ("-", "-") => None,
        (f, d) => Some(SecondBurst {
            freq_hz: num(f)?,
            dur_s: num(d)?,
        }),
    };
    let params = EventParams {
        osc_freq_hz: num(p[0])?,
        burst_dur_s: num(p[1])?,
        rel_amplitude: num(p[2])?,
        snr,
        overlap_frac: num(p[4])?,
        fs_hz,
        window_s,
        second,
    };
    let samples = fields.map(num).collect::<Result<Vec<f64>>>()?;
    if samples.len() != n {
        return Err(perr(
            lineno,
            format!("expected {n} samples, found {}", samples.len()),
        ));
    }
    Ok(SignalSegment {
        samples,
        fs_hz,
        label,
        event_id,
        params,
    })
}

/// 16-bit binary PGM of a map with values in `[0, 1]`; row 0 (highest
/// frequency) is the top image row.
pub fn tfmap_to_pgm(map: &TimeFrequencyMap) -> Result<Vec<u8>> {
    if map.values.len() != map.size * map.size || map.size == 0 {
        return Err(Error::invalid("map values do not form a square image"));
    }
    let mut out = format!("P5\n{} {}\n65535\n", map.size, map.size).into_bytes();
    out.reserve(2 * map.values.len());
    for &v in &map.values {
        let px = (v.clamp(0.0, 1.0) * 65535.0).round() as u16;
        out.extend_from_slice(&px.to_be_bytes());
    }
    Ok(out)
}

pub fn write_tfmap_pgm(map: &TimeFrequencyMap, path: &Path) -> Result<()> {
    fs::write(path, tfmap_to_pgm(map)?)?;
    Ok(())
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: usize) -> Result<()> {
        let v = u32::try_from(v).map_err(|_| Error::Format(format!("{v} does not fit in u32")))?;
        self.0.extend_from_slice(&v.to_le_bytes());
        Ok(())
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, v: &[f64]) {
        for &x in v {
            self.f64(x);
        }
    }
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.data.len())
            .ok_or_else(|| Error::Format(format!("model file truncated at byte {}", self.pos)))?;
        let s = &self.data[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }
    /// Reads `n` floats, checking first that the bytes exist so a corrupt
    /// length cannot trigger a huge allocation.
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(
            n.checked_mul(8)
                .ok_or_else(|| Error::Format("length overflow".into()))?,
        )?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

fn class_code(c: EventClass) -> u8 {
    EventClass::ALL
        .iter()
        .position(|&x| x == c)
        .expect("known class") as u8
}

fn kind_code(k: ModelKind) -> u8 {
    match k {
        ModelKind::Svm => 0,
        ModelKind::Cnn => 1,
        ModelKind::Hybrid => 2,
    }
}

fn coding_code(c: CodingScheme) -> u8 {
    match c {
        CodingScheme::OneVsAll => 0,
        CodingScheme::OneVsOne => 1,
        CodingScheme::Exhaustive => 2,
    }
}

fn read_coding(r: &mut Reader) -> Result<CodingScheme> {
    match r.u8()? {
        0 => Ok(CodingScheme::OneVsAll),
        1 => Ok(CodingScheme::OneVsOne),
        2 => Ok(CodingScheme::Exhaustive),
        t => Err(Error::Format(format!("unknown coding scheme tag {t}"))),
    }
}

fn write_config(w: &mut Writer, c: &TrainConfig) -> Result<()> {
    w.u64(c.seed);
    w.u8(coding_code(c.coding));
    w.u32(c.pool_size)?;
    match c.svm.kernel {
        KernelChoice::Linear => {
            w.u8(0);
            w.f64(0.0);
        }
        KernelChoice::Rbf { gamma: None } => {
            w.u8(1);
            w.f64(0.0);
        }
        KernelChoice::Rbf { gamma: Some(g) } => {
            w.u8(2);
            w.f64(g);
        }
    }
    w.f64(c.svm.c);
    w.f64(c.svm.tol);
    w.u32(c.svm.max_epochs)?;
    w.u64(c.svm.seed);
    w.u8(u8::from(c.svm.standardize));
    let h = &c.hyper;
    w.f64(h.lr);
    w.u32(h.batch_size)?;
    w.u32(h.epochs)?;
    w.f64(h.adam_beta1);
    w.f64(h.adam_beta2);
    w.f64(h.adam_eps);
    w.u64(h.seed);
    match &c.arch {
        None => w.u8(0),
        Some(a) => {
            w.u8(1);
            write_arch(w, a)?;
        }
    }
    Ok(())
}

fn read_config(r: &mut Reader, kind: ModelKind, scalogram: ScalogramConfig) -> Result<TrainConfig> {
    let seed = r.u64()?;
    let coding = read_coding(r)?;
    let pool_size = r.u32()?;
    let tag = r.u8()?;
    let gamma = r.f64()?;
    let kernel = match tag {
        0 => KernelChoice::Linear,
        1 => KernelChoice::Rbf { gamma: None },
        2 => KernelChoice::Rbf { gamma: Some(gamma) },
        t => return Err(Error::Format(format!("unknown kernel tag {t}"))),
    };
    let svm = SvmConfig {
        kernel,
        c: r.f64()?,
        tol: r.f64()?,
        max_epochs: r.u32()?,
        seed: r.u64()?,
        standardize: r.u8()? != 0,
    };
    let hyper = TrainHyper {
        lr: r.f64()?,
        batch_size: r.u32()?,
        epochs: r.u32()?,
        adam_beta1: r.f64()?,
        adam_beta2: r.f64()?,
        adam_eps: r.f64()?,
        seed: r.u64()?,
    };
    let arch = match r.u8()? {
        0 => None,
        _ => Some(read_arch(r)?),
    };
    Ok(TrainConfig {
        kind,
        scalogram,
        pool_size,
        coding,
        svm,
        hyper,
        arch,
        seed,
    })
}

fn write_ecoc(w: &mut Writer, m: &EcocModel) -> Result<()> {
    w.u8(coding_code(m.matrix.scheme));
    w.u32(m.matrix.rows())?;
    w.u32(m.matrix.classes())?;
    for r in 0..m.matrix.rows() {
        for &e in m.matrix.row(r) {
            w.u8(e as u8);
        }
    }
    w.u32(m.dim)?;
    for svm in &m.classifiers {
        match svm.kernel {
            KernelSpec::Linear => {
                w.u8(0);
                w.f64(0.0);
            }
            KernelSpec::Rbf { gamma } => {
                w.u8(1);
                w.f64(gamma);
            }
        }
        w.f64(svm.c);
        w.f64(svm.bias);
        w.u32(svm.dim)?;
        match &svm.standardizer {
            None => w.u8(0),
            Some(s) => {
                w.u8(1);
                w.f64s(&s.mean);
                w.f64s(&s.inv_std);
            }
        }
        w.u32(svm.support_vectors.len())?;
        for sv in &svm.support_vectors {
            w.f64s(sv);
        }
        w.f64s(&svm.alphas_signed);
    }
    Ok(())
}

fn read_ecoc(r: &mut Reader) -> Result<EcocModel> {
    let scheme = read_coding(r)?;
    let rows = r.u32()?;
    let classes = r.u32()?;
    let flat = r.take(rows.saturating_mul(classes))?;
    let entries: Vec<Vec<i8>> = flat
        .chunks(classes.max(1))
        .map(|c| c.iter().map(|&b| b as i8).collect())
        .collect();
    let matrix =
        CodeMatrix::from_entries(entries, scheme).map_err(|e| Error::Format(e.to_string()))?;
    let dim = r.u32()?;
    let mut classifiers = Vec::with_capacity(rows);
    for _ in 0..rows {
        let tag = r.u8()?;
        let gamma = r.f64()?;
        let kernel = match tag {
            0 => KernelSpec::Linear,
            1 => KernelSpec::Rbf { gamma },
            t => return Err(Error::Format(format!("unknown kernel tag {t}"))),
        };
        let c = r.f64()?;
        let bias = r.f64()?;
        let sdim = r.u32()?;
        if sdim != dim {
            return Err(Error::Format(
                "classifier dimension differs from model".into(),
            ));
        }
        let standardizer = match r.u8()? {
            0 => None,
            1 => Some(Standardizer {
                mean: r.f64s(dim)?,
                inv_std: r.f64s(dim)?,
            }),
            t => return Err(Error::Format(format!("bad standardizer flag {t}"))),
        };
        let n_sv = r.u32()?;
        let mut support_vectors = Vec::with_capacity(n_sv.min(1 << 20));
        for _ in 0..n_sv {
            support_vectors.push(r.f64s(dim)?);
        }
        classifiers.push(BinarySvmModel {
            support_vectors,
            alphas_signed: r.f64s(n_sv)?,
            bias,
            kernel,
            c,
            dim,
            standardizer,
        });
    }
    Ok(EcocModel {
        matrix,
        classifiers,
        dim,
    })
}

fn write_arch(w: &mut Writer, arch: &ConvNetArch) -> Result<()> {
    w.u32(arch.input_size)?;
    w.u32(arch.stages.len())?;
    for s in &arch.stages {
        let (tag, a, b, c) = match *s {
            LayerSpec::Conv {
                kernel,
                out_channels,
                stride,
            } => (0, kernel, out_channels, stride),
            LayerSpec::Relu => (1, 0, 0, 0),
            LayerSpec::MaxPool { window } => (2, window, 0, 0),
            LayerSpec::Residual { channels } => (3, channels, 0, 0),
            LayerSpec::Flatten => (4, 0, 0, 0),
            LayerSpec::Dense { width } => (5, width, 0, 0),
            LayerSpec::SoftmaxHead { classes } => (6, classes, 0, 0),
        };
        w.u8(tag);
        w.u32(a)?;
        w.u32(b)?;
        w.u32(c)?;
    }
    Ok(())
}

fn write_net(w: &mut Writer, net: &ConvNet) -> Result<()> {
    write_arch(w, &net.arch)?;
    w.u32(net.params.len())?;
    for g in &net.params {
        w.u32(g.name.len())?;
        w.0.extend_from_slice(g.name.as_bytes());
        w.u32(g.values.len())?;
        w.f64s(&g.values);
    }
    Ok(())
}

fn read_arch(r: &mut Reader) -> Result<ConvNetArch> {
    let input_size = r.u32()?;
    let n = r.u32()?;
    let mut stages = Vec::with_capacity(n.min(1024));
    for _ in 0..n {
        let tag = r.u8()?;
        let (a, b, c) = (r.u32()?, r.u32()?, r.u32()?);
        stages.push(match tag {
            0 => LayerSpec::Conv {
                kernel: a,
                out_channels: b,
                stride: c,
            },
            1 => LayerSpec::Relu,
            2 => LayerSpec::MaxPool { window: a },
            3 => LayerSpec::Residual { channels: a },
            4 => LayerSpec::Flatten,
            5 => LayerSpec::Dense { width: a },
            6 => LayerSpec::SoftmaxHead { classes: a },
            t => return Err(Error::Format(format!("unknown layer tag {t}"))),
        });
    }
    Ok(ConvNetArch { input_size, stages })
}

fn read_net(r: &mut Reader) -> Result<ConvNet> {
    let arch = read_arch(r)?;
    let groups = r.u32()?;
    let mut params = Vec::with_capacity(groups.min(1024));
    for _ in 0..groups {
        let len = r.u32()?;
        let name = String::from_utf8(r.take(len)?.to_vec())
            .map_err(|_| Error::Format("parameter name is not UTF-8".into()))?;
        let len = r.u32()?;
        params.push(ParamGroup {
            name,
            values: r.f64s(len)?,
        });
    }
    ConvNet::from_params(&arch, params).map_err(|e| Error::Format(e.to_string()))
}

pub fn model_to_bytes(m: &TrainedModel) -> Result<Vec<u8>> {
    let mut w = Writer(MODEL_MAGIC.to_vec());
    w.u32(MODEL_VERSION as usize)?;
    w.u8(kind_code(m.kind()));
    w.u64(m.data_seed);
    w.u32(m.class_names.len())?;
    for &c in &m.class_names {
        w.u8(class_code(c));
    }
    let s = m.scalogram_cfg();
    w.u32(s.size)?;
    w.f64(s.fmin_hz);
    w.f64(s.fmax_hz);
    w.u32(s.voices)?;
    write_config(&mut w, &m.config)?;
    match &m.body {
        ModelBody::Svm(b) => {
            w.u32(b.pool_size)?;
            write_ecoc(&mut w, &b.ecoc)?;
        }
        ModelBody::Cnn(b) => write_net(&mut w, &b.net)?,
        ModelBody::Hybrid(b) => {
            write_net(&mut w, &b.feature_net)?;
            write_ecoc(&mut w, &b.ecoc)?;
        }
    }
    Ok(w.0)
}

pub fn model_from_bytes(data: &[u8]) -> Result<TrainedModel> {
    let mut r = Reader { data, pos: 0 };
    if r.take(8).ok() != Some(MODEL_MAGIC.as_slice()) {
        return Err(Error::Format("not a model file (bad magic bytes)".into()));
    }
    let version = r.u32()? as u32;
    if version != MODEL_VERSION {
        return Err(Error::Version {
            found: version,
            expected: MODEL_VERSION,
        });
    }
    let kind = match r.u8()? {
        0 => ModelKind::Svm,
        1 => ModelKind::Cnn,
        2 => ModelKind::Hybrid,
        t => return Err(Error::Format(format!("unknown model kind tag {t}"))),
    };
    let data_seed = r.u64()?;
    let nc = r.u32()?;
    let class_names = r
        .take(nc)?
        .iter()
        .map(|&b| {
            EventClass::ALL
                .get(b as usize)
                .copied()
                .ok_or_else(|| Error::Format(format!("unknown class code {b}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let scalogram_cfg = ScalogramConfig {
        size: r.u32()?,
        fmin_hz: r.f64()?,
        fmax_hz: r.f64()?,
        voices: r.u32()?,
    };
    scalogram_cfg
        .validate()
        .map_err(|e| Error::Format(e.to_string()))?;
    let config = read_config(&mut r, kind, scalogram_cfg)?;
    let body = match kind {
        ModelKind::Svm => ModelBody::Svm(SvmModel {
            scalogram_cfg,
            pool_size: r.u32()?,
            ecoc: read_ecoc(&mut r)?,
        }),
        ModelKind::Cnn => ModelBody::Cnn(CnnModel {
            scalogram_cfg,
            net: read_net(&mut r)?,
        }),
        ModelKind::Hybrid => ModelBody::Hybrid(HybridModel {
            feature_net: read_net(&mut r)?,
            ecoc: read_ecoc(&mut r)?,
            scalogram_cfg,
        }),
    };
    if r.pos != data.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after the model payload",
            data.len() - r.pos
        )));
    }
    Ok(TrainedModel {
        class_names,
        body,
        config,
        data_seed,
    })
}

pub fn save_model(m: &TrainedModel, path: &Path) -> Result<()> {
    fs::write(path, model_to_bytes(m)?)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<TrainedModel> {
    model_from_bytes(&fs::read(path)?)
}

/// Loads a model and checks it is of the expected family.
pub fn load_model_of_kind(path: &Path, expected: ModelKind) -> Result<TrainedModel> {
    let m = load_model(path)?;
    if m.kind() != expected {
        return Err(Error::KindMismatch {
            expected: expected.to_string(),
            found: m.kind().to_string(),
        });
    }
    Ok(m)
}
