//! Channel loading, SNR estimation, maneuver detection and maneuver stacking.
//!
//! A test point is a set of equally sampled accelerometer channels. Channels
//! that carry any non-numeric or non-finite reading are kept but flagged
//! invalid, so downstream reports can list exclusions. The snapshot matrix
//! stacks every maneuver window of every valid channel as one row, channel
//! major: all maneuvers of the first channel, then all of the second, and so on.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{ModalError, Result};

const BIN_MAGIC: &[u8; 4] = b"AMCH";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRecord {
    pub channel_id: String,
    pub samples: Vec<f64>,
    pub valid: bool,
}

impl ChannelRecord {
    /// Builds a record, flagging it invalid if any sample is not finite.
    pub fn new(channel_id: impl Into<String>, samples: Vec<f64>) -> Self {
        let valid = samples.iter().all(|x| x.is_finite());
        Self {
            channel_id: channel_id.into(),
            samples,
            valid,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestPointDataset {
    pub test_point_id: String,
    pub channels: Vec<ChannelRecord>,
    pub dt: f64,
}

impl TestPointDataset {
    pub fn new(test_point_id: impl Into<String>, channels: Vec<ChannelRecord>, dt: f64) -> Result<Self> {
        let ds = Self {
            test_point_id: test_point_id.into(),
            channels,
            dt,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(ModalError::InvalidInput(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if self.channels.is_empty() {
            return Err(ModalError::InvalidInput("dataset has no channels".into()));
        }
        let len = self.channels[0].samples.len();
        if let Some(c) = self.channels.iter().find(|c| c.samples.len() != len) {
            return Err(ModalError::InvalidInput(format!(
                "channel `{}` has {} samples, expected {len}",
                c.channel_id,
                c.samples.len()
            )));
        }
        if self.valid_channels().next().is_none() {
            return Err(ModalError::InvalidInput("dataset has no valid channel".into()));
        }
        Ok(())
    }

    pub fn record_len(&self) -> usize {
        self.channels.first().map_or(0, |c| c.samples.len())
    }

    pub fn valid_channels(&self) -> impl Iterator<Item = &ChannelRecord> {
        self.channels.iter().filter(|c| c.valid)
    }

    pub fn valid_count(&self) -> usize {
        self.valid_channels().count()
    }

    pub fn excluded_channels(&self) -> Vec<String> {
        self.channels
            .iter()
            .filter(|c| !c.valid)
            .map(|c| c.channel_id.clone())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManeuverWindow {
    /// 1-based maneuver number, in time order.
    pub index: usize,
    pub start: usize,
    pub length: usize,
}

impl ManeuverWindow {
    pub fn end(&self) -> usize {
        self.start + self.length
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RowLabel {
    pub channel_id: String,
    pub maneuver: usize,
}

/// Stacked maneuver segments: rows are (channel, maneuver), columns are time.
#[derive(Debug, Clone)]
pub struct SnapshotMatrix {
    pub values: Mat<f64>,
    pub row_labels: Vec<RowLabel>,
    pub dt: f64,
}

impl SnapshotMatrix {
    pub fn new(values: Mat<f64>, row_labels: Vec<RowLabel>, dt: f64) -> Result<Self> {
        if values.nrows() != row_labels.len() {
            return Err(ModalError::Dimension(format!(
                "{} rows but {} labels",
                values.nrows(),
                row_labels.len()
            )));
        }
        Ok(Self { values, row_labels, dt })
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    /// Number of maneuver blocks per channel, inferred from the labels.
    pub fn maneuvers_per_channel(&self) -> usize {
        match self.row_labels.first() {
            None => 0,
            Some(first) => self
                .row_labels
                .iter()
                .take_while(|l| l.channel_id == first.channel_id)
                .count(),
        }
    }

    pub fn with_values(&self, values: Mat<f64>) -> Self {
        Self {
            values,
            row_labels: self.row_labels.clone(),
            dt: self.dt,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InputFormat {
    /// `time,ch_<id>,...` header followed by one row per sample.
    ChannelsCsv,
    /// `AMCH` little-endian header then column-major f64 samples.
    ChannelsBin,
}

impl InputFormat {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("bin") => InputFormat::ChannelsBin,
            _ => InputFormat::ChannelsCsv,
        }
    }
}

pub fn load_channels(source: impl Read, format: InputFormat, test_point_id: &str) -> Result<TestPointDataset> {
    match format {
        InputFormat::ChannelsCsv => load_csv(source, test_point_id),
        InputFormat::ChannelsBin => load_bin(source, test_point_id),
    }
}

pub fn load_channels_path(path: &Path) -> Result<TestPointDataset> {
    let file = File::open(path).map_err(|e| ModalError::io(path, e))?;
    let id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("test_point")
        .to_string();
    load_channels(BufReader::new(file), InputFormat::from_path(path), &id)
}

pub fn save_channels(dataset: &TestPointDataset, sink: impl Write, format: InputFormat) -> std::io::Result<()> {
    match format {
        InputFormat::ChannelsCsv => save_csv(dataset, sink),
        InputFormat::ChannelsBin => save_bin(dataset, sink),
    }
}

pub fn save_channels_path(dataset: &TestPointDataset, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| ModalError::io(path, e))?;
    save_channels(dataset, BufWriter::new(file), InputFormat::from_path(path)).map_err(|e| ModalError::io(path, e))
}

fn load_csv(source: impl Read, test_point_id: &str) -> Result<TestPointDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let mut records = reader.records();

    let header = match records.next() {
        None => {
            return Err(ModalError::Parse {
                line: 1,
                message: "empty input".into(),
            })
        }
        Some(r) => r.map_err(|e| csv_error(e, 1))?,
    };
    if header.len() < 2 || !header[0].eq_ignore_ascii_case("time") {
        return Err(ModalError::Parse {
            line: 1,
            message: "header must be `time,ch_<id>,...`".into(),
        });
    }
    let mut ids = Vec::with_capacity(header.len() - 1);
    for cell in header.iter().skip(1) {
        let id = cell.strip_prefix("ch_").ok_or_else(|| ModalError::Parse {
            line: 1,
            message: format!("column `{cell}` does not start with `ch_`"),
        })?;
        ids.push(id.to_string());
    }

    let n_ch = ids.len();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); n_ch];
    let mut defective = vec![false; n_ch];
    let mut times = Vec::new();
    for (row, record) in records.enumerate() {
        let line = row + 2;
        let record = record.map_err(|e| csv_error(e, line))?;
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() != n_ch + 1 {
            return Err(ModalError::Parse {
                line,
                message: format!("expected {} fields, found {}", n_ch + 1, record.len()),
            });
        }
        let t: f64 = record[0].parse().map_err(|_| ModalError::Parse {
            line,
            message: format!("time value `{}` is not numeric", &record[0]),
        })?;
        times.push(t);
        for (k, cell) in record.iter().skip(1).enumerate() {
            let v = match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => v,
                Ok(v) => {
                    defective[k] = true;
                    v
                }
                Err(_) => {
                    defective[k] = true;
                    f64::NAN
                }
            };
            columns[k].push(v);
        }
    }
    if times.is_empty() {
        return Err(ModalError::Parse {
            line: 2,
            message: "no sample rows".into(),
        });
    }
    let dt = if times.len() >= 2 { times[1] - times[0] } else { 1.0 };
    if !(dt > 0.0) {
        return Err(ModalError::Parse {
            line: 3,
            message: format!("time column is not increasing (dt = {dt})"),
        });
    }
    let channels = ids
        .into_iter()
        .zip(columns)
        .zip(defective)
        .map(|((channel_id, samples), bad)| ChannelRecord {
            channel_id,
            samples,
            valid: !bad,
        })
        .collect();
    TestPointDataset::new(test_point_id, channels, dt)
}

fn csv_error(e: csv::Error, line: usize) -> ModalError {
    let line = e.position().map_or(line, |p| p.line() as usize);
    ModalError::Parse {
        line,
        message: e.to_string(),
    }
}

fn save_csv(dataset: &TestPointDataset, sink: impl Write) -> std::io::Result<()> {
    let mut w = BufWriter::new(sink);
    write!(w, "time")?;
    for c in &dataset.channels {
        write!(w, ",ch_{}", c.channel_id)?;
    }
    writeln!(w)?;
    for t in 0..dataset.record_len() {
        write!(w, "{}", t as f64 * dataset.dt)?;
        for c in &dataset.channels {
            write!(w, ",{}", c.samples[t])?;
        }
        writeln!(w)?;
    }
    w.flush()
}

fn load_bin(mut source: impl Read, test_point_id: &str) -> Result<TestPointDataset> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes).map_err(|e| ModalError::Parse {
        line: 0,
        message: e.to_string(),
    })?;
    let header_len = 4 + 4 + 4 + 8;
    if bytes.len() < header_len || &bytes[0..4] != BIN_MAGIC {
        return Err(ModalError::Parse {
            line: 0,
            message: "missing AMCH header".into(),
        });
    }
    let n_ch = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let n_s = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let dt = f64::from_le_bytes(bytes[12..20].try_into().unwrap());
    let expected = header_len + 8 * n_ch * n_s;
    if bytes.len() != expected {
        return Err(ModalError::Parse {
            line: 0,
            message: format!("payload is {} bytes, header implies {expected}", bytes.len()),
        });
    }
    let body = &bytes[header_len..];
    let channels = (0..n_ch)
        .map(|c| {
            let samples = (0..n_s)
                .map(|t| {
                    let o = 8 * (c * n_s + t);
                    f64::from_le_bytes(body[o..o + 8].try_into().unwrap())
                })
                .collect();
            ChannelRecord::new((c + 1).to_string(), samples)
        })
        .collect();
    TestPointDataset::new(test_point_id, channels, dt)
}

fn save_bin(dataset: &TestPointDataset, sink: impl Write) -> std::io::Result<()> {
    let mut w = BufWriter::new(sink);
    w.write_all(BIN_MAGIC)?;
    w.write_all(&(dataset.channels.len() as u32).to_le_bytes())?;
    w.write_all(&(dataset.record_len() as u32).to_le_bytes())?;
    w.write_all(&dataset.dt.to_le_bytes())?;
    for c in &dataset.channels {
        for x in &c.samples {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    w.flush()
}

fn variance(x: impl ExactSizeIterator<Item = f64> + Clone) -> f64 {
    let n = x.len() as f64;
    let mean = x.clone().sum::<f64>() / n;
    x.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

/// Signal-to-noise ratio in dB using the first-difference white-noise
/// estimator: `P_noise = var(Δx)/2`, `P_signal = max(var(x) − P_noise, 0)`.
/// Returns `-inf` when no signal power remains and `+inf` when the noise
/// estimate vanishes.
pub fn compute_snr(record: &ChannelRecord) -> Result<f64> {
    if !record.valid {
        return Err(ModalError::InvalidInput(format!(
            "channel `{}` is defective",
            record.channel_id
        )));
    }
    let x = &record.samples;
    if x.len() < 16 {
        return Err(ModalError::InvalidInput(format!(
            "channel `{}` has {} samples, at least 16 required",
            record.channel_id,
            x.len()
        )));
    }
    let p_noise = variance(x.windows(2).map(|w| w[1] - w[0]).collect::<Vec<_>>().into_iter()) / 2.0;
    let p_signal = (variance(x.iter().copied()) - p_noise).max(0.0);
    if p_signal == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    if p_noise == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (p_signal / p_noise).log10())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionConfig {
    /// Width of the centered moving average applied to the RMS envelope.
    pub smoothing_width: usize,
    /// Fraction of the window length placed before the detected peak.
    pub preroll_fraction: f64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            smoothing_width: 51,
            preroll_fraction: 0.05,
        }
    }
}

/// RMS across valid channels, smoothed by a centered moving average whose
/// support is truncated at the record edges.
pub fn maneuver_envelope(dataset: &TestPointDataset, smoothing_width: usize) -> Vec<f64> {
    let len = dataset.record_len();
    let n_valid = dataset.valid_count().max(1) as f64;
    let mut power = vec![0.0; len];
    for c in dataset.valid_channels() {
        for (p, x) in power.iter_mut().zip(&c.samples) {
            *p += x * x;
        }
    }
    let rms: Vec<f64> = power.iter().map(|p| (p / n_valid).sqrt()).collect();

    let half = smoothing_width.max(1) / 2;
    let mut prefix = vec![0.0; len + 1];
    for (i, v) in rms.iter().enumerate() {
        prefix[i + 1] = prefix[i] + v;
    }
    (0..len)
        .map(|t| {
            let lo = t.saturating_sub(half);
            let hi = (t + half + 1).min(len);
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

/// Finds `count` maneuver windows from the largest well-separated peaks of
/// the channel envelope. A candidate peak is kept only if its full window
/// fits inside the record, so a truncated trailing maneuver is never chosen.
pub fn detect_maneuvers(
    dataset: &TestPointDataset,
    count: usize,
    window_length: usize,
    cfg: &DetectionConfig,
) -> Result<Vec<ManeuverWindow>> {
    let len = dataset.record_len();
    if count == 0 || window_length == 0 {
        return Err(ModalError::InvalidInput(
            "maneuver count and window length must be positive".into(),
        ));
    }
    if count * window_length > len {
        return Err(ModalError::InvalidInput(format!(
            "{count} windows of {window_length} samples cannot fit in {len} samples"
        )));
    }
    let env = maneuver_envelope(dataset, cfg.smoothing_width);
    let preroll = (cfg.preroll_fraction * window_length as f64).round() as usize;

    let mut candidates: Vec<usize> = (1..len.saturating_sub(1))
        .filter(|&t| env[t] >= env[t - 1] && env[t] > env[t + 1] && env[t] > 0.0)
        .filter(|&t| t.saturating_sub(preroll) + window_length <= len)
        .collect();
    candidates.sort_by(|&a, &b| env[b].total_cmp(&env[a]).then(a.cmp(&b)));

    let mut peaks: Vec<usize> = Vec::with_capacity(count);
    for t in candidates {
        if peaks.iter().all(|&p| p.abs_diff(t) >= window_length) {
            peaks.push(t);
            if peaks.len() == count {
                break;
            }
        }
    }
    if peaks.len() < count {
        peaks.sort_unstable();
        return Err(ModalError::Detection {
            requested: count,
            found: peaks.len(),
            peaks,
        });
    }
    peaks.sort_unstable();
    Ok(peaks
        .into_iter()
        .enumerate()
        .map(|(i, p)| ManeuverWindow {
            index: i + 1,
            start: p.saturating_sub(preroll),
            length: window_length,
        })
        .collect())
}

/// Stacks each valid channel's maneuver segments, channel major.
pub fn build_snapshot_matrix(
    dataset: &TestPointDataset,
    windows: &[ManeuverWindow],
    window_length: usize,
    demean: bool,
) -> Result<SnapshotMatrix> {
    let len = dataset.record_len();
    for w in windows {
        if w.start + window_length > len {
            return Err(ModalError::Bounds {
                index: w.index,
                start: w.start,
                end: w.start + window_length,
                len,
            });
        }
    }
    let valid: Vec<&ChannelRecord> = dataset.valid_channels().collect();
    if valid.is_empty() {
        return Err(ModalError::InvalidInput("no valid channel to stack".into()));
    }
    let n_rows = valid.len() * windows.len();
    let mut values = Mat::<f64>::zeros(n_rows, window_length);
    let mut labels = Vec::with_capacity(n_rows);
    for (c, ch) in valid.iter().enumerate() {
        for (j, w) in windows.iter().enumerate() {
            let row = c * windows.len() + j;
            let seg = &ch.samples[w.start..w.start + window_length];
            let mean = if demean {
                seg.iter().sum::<f64>() / window_length as f64
            } else {
                0.0
            };
            for (t, x) in seg.iter().enumerate() {
                values[(row, t)] = x - mean;
            }
            labels.push(RowLabel {
                channel_id: ch.channel_id.clone(),
                maneuver: w.index,
            });
        }
    }
    SnapshotMatrix::new(values, labels, dataset.dt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn toy_dataset(n_ch: usize, len: usize) -> TestPointDataset {
        let channels = (0..n_ch)
            .map(|c| ChannelRecord::new((c + 1).to_string(), (0..len).map(|t| (c * 1000 + t) as f64).collect()))
            .collect();
        TestPointDataset::new("toy", channels, 1.0).unwrap()
    }

    #[test]
    fn csv_with_defective_columns_keeps_them_flagged() {
        let mut text = String::from("time");
        for c in 0..92 {
            text.push_str(&format!(",ch_{c}"));
        }
        text.push('\n');
        let bad = [3usize, 17, 40, 41, 90];
        for t in 0..200 {
            text.push_str(&t.to_string());
            for c in 0..92 {
                if bad.contains(&c) && t == 7 {
                    text.push_str(",NaN");
                } else if bad.contains(&c) && t == 9 {
                    text.push_str(",err");
                } else {
                    text.push_str(&format!(",{}", (t * c) as f64 * 0.01));
                }
            }
            text.push('\n');
        }
        let ds = load_channels(text.as_bytes(), InputFormat::ChannelsCsv, "tp1").unwrap();
        assert_eq!(ds.channels.len(), 92);
        assert_eq!(ds.valid_count(), 87);
        assert_eq!(ds.excluded_channels(), vec!["3", "17", "40", "41", "90"]);
    }

    #[test]
    fn empty_csv_is_a_parse_error() {
        let err = load_channels(&b""[..], InputFormat::ChannelsCsv, "x").unwrap_err();
        assert!(matches!(err, ModalError::Parse { .. }));
    }

    #[test]
    fn row_length_mismatch_reports_line() {
        let text = "time,ch_a,ch_b\n0,1,2\n1,3\n";
        match load_channels(text.as_bytes(), InputFormat::ChannelsCsv, "x").unwrap_err() {
            ModalError::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bin_rejects_truncated_payload() {
        let ds = toy_dataset(2, 10);
        let mut buf = Vec::new();
        save_channels(&ds, &mut buf, InputFormat::ChannelsBin).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(load_channels(&buf[..], InputFormat::ChannelsBin, "toy").is_err());
    }

    #[test]
    fn snr_of_white_noise_is_non_positive() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let samples: Vec<f64> = (0..4000).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let snr = compute_snr(&ChannelRecord::new("n", samples)).unwrap();
            assert!(snr <= 0.5, "seed {seed}: {snr}");
        }
    }

    #[test]
    fn snr_of_slow_sinusoid_is_high() {
        let samples: Vec<f64> = (0..4000)
            .map(|t| (2.0 * std::f64::consts::PI * t as f64 / 1000.0).sin())
            .collect();
        let snr = compute_snr(&ChannelRecord::new("s", samples)).unwrap();
        assert!(snr >= 40.0, "{snr}");
    }

    #[test]
    fn snr_of_constant_is_negative_infinity() {
        let snr = compute_snr(&ChannelRecord::new("c", vec![2.5; 64])).unwrap();
        assert_eq!(snr, f64::NEG_INFINITY);
    }

    #[test]
    fn snr_rejects_invalid_and_short_channels() {
        let mut rec = ChannelRecord::new("x", vec![0.0; 64]);
        rec.valid = false;
        assert!(compute_snr(&rec).is_err());
        assert!(compute_snr(&ChannelRecord::new("y", vec![1.0; 8])).is_err());
    }

    #[test]
    fn single_pulse_yields_one_window() {
        let len = 3000;
        let samples: Vec<f64> = (0..len)
            .map(|t| {
                if t >= 1000 {
                    (-(t as f64 - 1000.0) / 60.0).exp() * ((t - 1000) as f64 * 0.3).cos()
                } else {
                    0.0
                }
            })
            .collect();
        let ds = TestPointDataset::new("p", vec![ChannelRecord::new("1", samples)], 1.0).unwrap();
        let w = detect_maneuvers(&ds, 1, 500, &DetectionConfig::default()).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].index, 1);
        assert!(w[0].start.abs_diff(1000) <= 25, "{:?}", w[0]);
    }

    #[test]
    fn flat_record_fails_detection() {
        let ds = TestPointDataset::new("f", vec![ChannelRecord::new("1", vec![1.0; 2000])], 1.0).unwrap();
        let err = detect_maneuvers(&ds, 1, 500, &DetectionConfig::default()).unwrap_err();
        assert!(matches!(err, ModalError::Detection { found: 0, .. }));
    }

    #[test]
    fn stacking_single_channel_single_window_is_identity() {
        let ds = toy_dataset(1, 3000);
        let w = [ManeuverWindow {
            index: 1,
            start: 100,
            length: 2200,
        }];
        let x = build_snapshot_matrix(&ds, &w, 2200, false).unwrap();
        assert_eq!((x.nrows(), x.ncols()), (1, 2200));
        for t in 0..2200 {
            assert_eq!(x.values[(0, t)], ds.channels[0].samples[100 + t]);
        }
    }

    #[test]
    fn stacking_is_channel_major() {
        let ds = toy_dataset(3, 600);
        let windows: Vec<ManeuverWindow> = (0..5)
            .map(|j| ManeuverWindow {
                index: j + 1,
                start: j * 100,
                length: 100,
            })
            .collect();
        let x = build_snapshot_matrix(&ds, &windows, 100, false).unwrap();
        assert_eq!(x.nrows(), 15);
        // enumerate the expected labels independently
        let mut expected = Vec::new();
        for c in ["1", "2", "3"] {
            for m in 1..=5 {
                expected.push((c.to_string(), m));
            }
        }
        for (k, label) in x.row_labels.iter().enumerate() {
            assert_eq!((label.channel_id.clone(), label.maneuver), expected[k]);
        }
        for k in 5..10 {
            assert_eq!(x.row_labels[k].channel_id, "2");
        }
        assert_eq!(x.maneuvers_per_channel(), 5);
        // lossless: entry equals the source sample
        for (k, label) in x.row_labels.iter().enumerate() {
            let ch = ds.channels.iter().find(|c| c.channel_id == label.channel_id).unwrap();
            let w = windows[label.maneuver - 1];
            for t in 0..100 {
                assert_eq!(x.values[(k, t)], ch.samples[w.start + t]);
            }
        }
    }

    #[test]
    fn window_past_record_end_is_bounds_error() {
        let ds = toy_dataset(1, 1000);
        let w = [ManeuverWindow {
            index: 1,
            start: 900,
            length: 200,
        }];
        assert!(matches!(
            build_snapshot_matrix(&ds, &w, 200, false).unwrap_err(),
            ModalError::Bounds { .. }
        ));
    }

    #[test]
    fn demean_removes_row_offsets() {
        let ds = toy_dataset(2, 400);
        let w = [ManeuverWindow {
            index: 1,
            start: 0,
            length: 400,
        }];
        let x = build_snapshot_matrix(&ds, &w, 400, true).unwrap();
        for r in 0..2 {
            let mean: f64 = (0..400).map(|t| x.values[(r, t)]).sum::<f64>() / 400.0;
            assert!(mean.abs() < 1e-9);
        }
    }
}
