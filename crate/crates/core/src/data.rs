//! Hourly sensor frames: CSV ingestion, gap handling, min-max scaling,
//! windowing and chronological splits.

use std::fmt::Write as _;
use std::ops::Range;
use std::path::Path;

use chrono::{DateTime, Datelike, Duration, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Model input channels, in column order. The target is `co2_in`.
pub const FEATURES: [&str; 5] = ["co2_in", "hour", "t_in", "t_out", "num_week"];
pub const TARGET_FEATURE: usize = 0;

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

/// Hourly multi-channel series. Rows flagged invalid are holes left by
/// [`fill_gaps`]; their measured values are NaN and windowing skips them.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesFrame {
    pub timestamps: Vec<NaiveDateTime>,
    pub co2_in: Vec<f64>,
    pub t_in: Vec<f64>,
    pub t_out: Vec<f64>,
    pub hour: Vec<f64>,
    pub num_week: Vec<f64>,
    pub valid: Vec<bool>,
}

/// Monday = 1 … Sunday = 7.
pub fn num_week(ts: &NaiveDateTime) -> f64 {
    ts.weekday().number_from_monday() as f64
}

impl TimeSeriesFrame {
    /// Builds a frame from measured columns, deriving the calendar columns.
    /// Rows must already be strictly increasing in time.
    pub fn from_measurements(
        timestamps: Vec<NaiveDateTime>,
        co2_in: Vec<f64>,
        t_in: Vec<f64>,
        t_out: Vec<f64>,
    ) -> Result<Self> {
        let n = timestamps.len();
        if co2_in.len() != n || t_in.len() != n || t_out.len() != n {
            return Err(Error::Data("measured columns differ in length".into()));
        }
        if timestamps.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Data("timestamps must be strictly increasing".into()));
        }
        let hour = timestamps.iter().map(|t| t.hour() as f64).collect();
        let num_week = timestamps.iter().map(num_week).collect();
        Ok(Self {
            timestamps,
            co2_in,
            t_in,
            t_out,
            hour,
            num_week,
            valid: vec![true; n],
        })
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    /// Column `index` in [`FEATURES`] order.
    pub fn feature(&self, index: usize) -> &[f64] {
        match index {
            0 => &self.co2_in,
            1 => &self.hour,
            2 => &self.t_in,
            3 => &self.t_out,
            4 => &self.num_week,
            _ => panic!("feature index {index} out of range"),
        }
    }

    fn feature_mut(&mut self, index: usize) -> &mut Vec<f64> {
        match index {
            0 => &mut self.co2_in,
            1 => &mut self.hour,
            2 => &mut self.t_in,
            3 => &mut self.t_out,
            4 => &mut self.num_week,
            _ => panic!("feature index {index} out of range"),
        }
    }

    pub fn row(&self, i: usize) -> [f64; 5] {
        [self.co2_in[i], self.hour[i], self.t_in[i], self.t_out[i], self.num_week[i]]
    }

    /// Writes the frame in the same schema [`load_frame`] reads. Holes are omitted.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["timestamp", "co2_in", "t_in", "t_out", "hour", "num_week"])?;
        for i in (0..self.len()).filter(|&i| self.valid[i]) {
            w.write_record([
                self.timestamps[i].format(TIMESTAMP_FORMAT).to_string(),
                self.co2_in[i].to_string(),
                self.t_in[i].to_string(),
                self.t_out[i].to_string(),
                self.hour[i].to_string(),
                self.num_week[i].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Which CSV columns hold the measured series.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SchemaMapping {
    pub timestamp: String,
    pub co2_in: String,
    pub t_in: String,
    pub t_out: String,
}

impl Default for SchemaMapping {
    fn default() -> Self {
        Self {
            timestamp: "timestamp".into(),
            co2_in: "co2_in".into(),
            t_in: "t_in".into(),
            t_out: "t_out".into(),
        }
    }
}

pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.naive_local());
    }
    ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M:%S", "%Y-%m-%d %H:%M"]
        .iter()
        .find_map(|fmt| NaiveDateTime::parse_from_str(s, fmt).ok())
}

/// A loaded frame plus the header columns that were not used.
#[derive(Debug, Clone)]
pub struct LoadedFrame {
    pub frame: TimeSeriesFrame,
    pub ignored_columns: Vec<String>,
}

/// Reads an hourly CSV. Rows are sorted by time; calendar columns are always
/// derived from the timestamps, even if the file carries its own.
pub fn load_frame(path: &Path, schema: &SchemaMapping) -> Result<LoadedFrame> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let headers = reader.headers()?.clone();
    let find = |name: &str| -> Result<usize> {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("missing required column `{name}`"),
        })
    };
    let cols = [
        find(&schema.timestamp)?,
        find(&schema.co2_in)?,
        find(&schema.t_in)?,
        find(&schema.t_out)?,
    ];
    let ignored_columns = headers
        .iter()
        .enumerate()
        .filter(|(i, h)| !cols.contains(i) && *h != "hour" && *h != "num_week")
        .map(|(_, h)| h.to_string())
        .collect();

    let mut rows: Vec<(NaiveDateTime, [f64; 3], usize)> = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let raw_ts = record.get(cols[0]).unwrap_or("");
        let ts = parse_timestamp(raw_ts)
            .ok_or_else(|| parse_err(format!("unparseable timestamp `{raw_ts}`")))?;
        if ts.minute() != 0 || ts.second() != 0 || ts.nanosecond() != 0 {
            return Err(parse_err(format!("timestamp `{raw_ts}` is not on the hour")));
        }
        let mut values = [0.0; 3];
        for (slot, &col) in values.iter_mut().zip(&cols[1..]) {
            let raw = record.get(col).unwrap_or("");
            *slot = raw
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(format!("bad value `{raw}` in column `{}`", &headers[col])))?;
        }
        rows.push((ts, values, line));
    }
    rows.sort_by_key(|r| r.0);
    if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::DuplicateTimestamp {
            path: path.to_path_buf(),
            line: w[0].2.max(w[1].2),
            timestamp: w[1].0.format(TIMESTAMP_FORMAT).to_string(),
        });
    }
    let frame = TimeSeriesFrame::from_measurements(
        rows.iter().map(|r| r.0).collect(),
        rows.iter().map(|r| r.1[0]).collect(),
        rows.iter().map(|r| r.1[1]).collect(),
        rows.iter().map(|r| r.1[2]).collect(),
    )?;
    Ok(LoadedFrame {
        frame,
        ignored_columns,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Gap {
    /// First missing hour.
    pub start: NaiveDateTime,
    pub missing_hours: usize,
    pub filled: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GapReport {
    pub gaps: Vec<Gap>,
}

impl GapReport {
    pub fn filled(&self) -> usize {
        self.gaps.iter().filter(|g| g.filled).count()
    }

    pub fn holes(&self) -> usize {
        self.gaps.len() - self.filled()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("start\tmissing_hours\thandling\n");
        for g in &self.gaps {
            let _ = writeln!(
                out,
                "{}\t{}\t{}",
                g.start.format(TIMESTAMP_FORMAT),
                g.missing_hours,
                if g.filled { "forward-filled" } else { "hole" }
            );
        }
        out
    }
}

/// Puts the frame on a regular hourly grid. Gaps of at most `max_gap` hours
/// are forward-filled from the last observation; longer gaps stay as invalid
/// rows.
pub fn fill_gaps(frame: &TimeSeriesFrame, max_gap: usize) -> (TimeSeriesFrame, GapReport) {
    let mut report = GapReport::default();
    if frame.is_empty() {
        return (frame.clone(), report);
    }
    let hour = Duration::hours(1);
    let mut out = TimeSeriesFrame {
        timestamps: Vec::with_capacity(frame.len()),
        co2_in: Vec::with_capacity(frame.len()),
        t_in: Vec::with_capacity(frame.len()),
        t_out: Vec::with_capacity(frame.len()),
        hour: Vec::with_capacity(frame.len()),
        num_week: Vec::with_capacity(frame.len()),
        valid: Vec::with_capacity(frame.len()),
    };
    let push = |out: &mut TimeSeriesFrame, ts: NaiveDateTime, m: Option<[f64; 3]>| {
        let [c, ti, to] = m.unwrap_or([f64::NAN; 3]);
        out.timestamps.push(ts);
        out.co2_in.push(c);
        out.t_in.push(ti);
        out.t_out.push(to);
        out.hour.push(ts.hour() as f64);
        out.num_week.push(num_week(&ts));
        out.valid.push(m.is_some());
    };
    for i in 0..frame.len() {
        if i > 0 {
            let prev = frame.timestamps[i - 1];
            let missing = ((frame.timestamps[i] - prev).num_hours() - 1).max(0) as usize;
            if missing > 0 {
                let filled = missing <= max_gap && frame.valid[i - 1];
                let last = [frame.co2_in[i - 1], frame.t_in[i - 1], frame.t_out[i - 1]];
                for k in 1..=missing {
                    push(&mut out, prev + hour * k as i32, filled.then_some(last));
                }
                report.gaps.push(Gap {
                    start: prev + hour,
                    missing_hours: missing,
                    filled,
                });
            }
        }
        let m = frame.valid[i].then(|| [frame.co2_in[i], frame.t_in[i], frame.t_out[i]]);
        push(&mut out, frame.timestamps[i], m);
    }
    (out, report)
}

/// Per-feature min-max scaling fitted on the training range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub features: Vec<String>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Normalizer {
    /// Fits on the valid rows of `range`.
    pub fn fit(frame: &TimeSeriesFrame, range: Range<usize>) -> Result<Self> {
        let range = range.start..range.end.min(frame.len());
        let rows: Vec<usize> = range.filter(|&i| frame.valid[i]).collect();
        if rows.is_empty() {
            return Err(Error::Data("training range has no valid rows".into()));
        }
        let mut min = Vec::with_capacity(FEATURES.len());
        let mut max = Vec::with_capacity(FEATURES.len());
        for (f, name) in FEATURES.iter().enumerate() {
            let col = frame.feature(f);
            let lo = rows.iter().map(|&i| col[i]).fold(f64::INFINITY, f64::min);
            let hi = rows.iter().map(|&i| col[i]).fold(f64::NEG_INFINITY, f64::max);
            if hi <= lo {
                return Err(Error::ConstantFeature(name.to_string()));
            }
            min.push(lo);
            max.push(hi);
        }
        Ok(Self {
            features: FEATURES.iter().map(|s| s.to_string()).collect(),
            min,
            max,
        })
    }

    /// Maps `x` of feature `f` so the training range becomes [0, 1]. No clipping.
    pub fn scale(&self, f: usize, x: f64) -> f64 {
        (x - self.min[f]) / (self.max[f] - self.min[f])
    }

    pub fn unscale(&self, f: usize, y: f64) -> f64 {
        self.min[f] + y * (self.max[f] - self.min[f])
    }

    pub fn invert_target(&self, y: f64) -> f64 {
        self.unscale(TARGET_FEATURE, y)
    }

    /// Width of the target's training range, in ppm.
    pub fn target_range(&self) -> f64 {
        self.max[TARGET_FEATURE] - self.min[TARGET_FEATURE]
    }

    pub fn transform(&self, frame: &TimeSeriesFrame) -> TimeSeriesFrame {
        let mut out = frame.clone();
        for f in 0..FEATURES.len() {
            out.feature_mut(f).iter_mut().for_each(|x| *x = self.scale(f, *x));
        }
        out
    }

    pub fn transform_window(&self, window: &Window) -> Window {
        let (l, d) = window.inputs.shape();
        let mut inputs = window.inputs.clone();
        let data = inputs.as_mut_slice();
        for r in 0..l {
            for f in 0..d {
                data[r * d + f] = self.scale(f, data[r * d + f]);
            }
        }
        Window {
            inputs,
            target: self.scale(TARGET_FEATURE, window.target),
            ..window.clone()
        }
    }
}

/// One `lookback × features` input block and its `horizon`-ahead target.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    /// Frame row of the first input hour.
    pub start: usize,
    pub inputs: Matrix,
    pub target: f64,
    /// Frame row of the target hour: `start + lookback - 1 + horizon`.
    pub target_index: usize,
}

impl Window {
    pub fn last_input_index(&self) -> usize {
        self.start + self.inputs.rows() - 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowSet {
    pub lookback: usize,
    pub horizon: usize,
    pub windows: Vec<Window>,
    /// Scaling applied to `windows`, if any.
    pub normalizer: Option<Normalizer>,
}

impl WindowSet {
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn targets(&self) -> Vec<f64> {
        self.windows.iter().map(|w| w.target).collect()
    }

    fn with_windows(&self, windows: Vec<Window>) -> Self {
        Self {
            windows,
            ..self.clone_empty()
        }
    }

    fn clone_empty(&self) -> Self {
        Self {
            lookback: self.lookback,
            horizon: self.horizon,
            windows: Vec::new(),
            normalizer: self.normalizer.clone(),
        }
    }

    pub fn normalized(&self, normalizer: &Normalizer) -> Result<Self> {
        if self.normalizer.is_some() {
            return Err(Error::Data("window set is already normalized".into()));
        }
        Ok(Self {
            lookback: self.lookback,
            horizon: self.horizon,
            windows: self.windows.iter().map(|w| normalizer.transform_window(w)).collect(),
            normalizer: Some(normalizer.clone()),
        })
    }
}

/// All windows whose input hours and target hour are valid, consecutive
/// hourly rows. Frames shorter than `lookback + horizon` yield no windows.
pub fn make_windows(frame: &TimeSeriesFrame, lookback: usize, horizon: usize, stride: usize) -> Result<WindowSet> {
    if lookback == 0 || horizon == 0 || stride == 0 {
        return Err(Error::InvalidArgument(
            "lookback, horizon and stride must be at least 1".into(),
        ));
    }
    let n = frame.len();
    // bad_prefix[i] counts rows < i that are holes or start a discontinuity.
    let mut bad_prefix = vec![0usize; n + 1];
    for i in 0..n {
        let broken = i > 0 && frame.timestamps[i] - frame.timestamps[i - 1] != Duration::hours(1);
        let bad = !frame.valid[i] || broken;
        bad_prefix[i + 1] = bad_prefix[i] + bad as usize;
    }
    let span = lookback + horizon;
    let mut windows = Vec::new();
    if n >= span {
        for start in (0..=n - span).step_by(stride) {
            let end = start + span - 1;
            let holes = bad_prefix[end + 1] - bad_prefix[start];
            // A discontinuity flagged on `start` itself is not inside the window.
            let start_flag = bad_prefix[start + 1] - bad_prefix[start];
            let start_is_hole = !frame.valid[start];
            if holes - start_flag + start_is_hole as usize > 0 {
                continue;
            }
            let mut data = Vec::with_capacity(lookback * FEATURES.len());
            for r in start..start + lookback {
                data.extend_from_slice(&frame.row(r));
            }
            windows.push(Window {
                start,
                inputs: Matrix::from_vec(lookback, FEATURES.len(), data)?,
                target: frame.co2_in[end],
                target_index: end,
            });
        }
    }
    Ok(WindowSet {
        lookback,
        horizon,
        windows,
        normalizer: None,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: WindowSet,
    pub val: WindowSet,
    pub test: WindowSet,
}

/// Chronological split by target time: the last `test_fraction` of windows
/// is test, `val_fraction` of the remainder is validation, the rest trains.
/// Windows of an earlier split whose target falls at or after the first input
/// hour of the next split are dropped.
pub fn split_chronological(set: &WindowSet, test_fraction: f64, val_fraction: f64) -> Result<Splits> {
    let valid_frac = |f: f64| f > 0.0 && f < 1.0;
    if !valid_frac(test_fraction) || !valid_frac(val_fraction) || test_fraction + val_fraction >= 1.0 {
        return Err(Error::InvalidArgument(format!(
            "split fractions must lie in (0,1) with a sum below 1, got test={test_fraction} val={val_fraction}"
        )));
    }
    let mut windows = set.windows.clone();
    windows.sort_by_key(|w| w.target_index);
    let n = windows.len();
    let n_test = (n as f64 * test_fraction).round() as usize;
    let n_val = ((n - n_test.min(n)) as f64 * val_fraction).round() as usize;
    let n_train = n.saturating_sub(n_test + n_val);

    let test: Vec<Window> = windows.split_off(n_train + n_val);
    let mut val: Vec<Window> = windows.split_off(n_train);
    let mut train = windows;

    let first_input = |ws: &[Window]| ws.iter().map(|w| w.start).min();
    if let Some(cut) = first_input(&test) {
        val.retain(|w| w.target_index < cut);
        train.retain(|w| w.target_index < cut);
    }
    if let Some(cut) = first_input(&val) {
        train.retain(|w| w.target_index < cut);
    }
    for (name, part) in [("train", &train), ("validation", &val), ("test", &test)] {
        if part.is_empty() {
            return Err(Error::Data(format!(
                "{name} split is empty ({n} windows in total)"
            )));
        }
    }
    Ok(Splits {
        train: set.with_windows(train),
        val: set.with_windows(val),
        test: set.with_windows(test),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub test_fraction: f64,
    pub val_fraction: f64,
    pub max_gap: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            test_fraction: 0.2,
            val_fraction: 0.1,
            max_gap: 3,
        }
    }
}

/// Normalized train/validation/test windows ready for fitting.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub splits: Splits,
    pub normalizer: Normalizer,
    pub gaps: GapReport,
}

/// Gap-fills, windows and splits `frame`, then fits the scaler on the hours
/// the training windows cover and applies it to all three splits.
pub fn build_dataset(frame: &TimeSeriesFrame, lookback: usize, horizon: usize, cfg: &SplitConfig) -> Result<Dataset> {
    let (filled, gaps) = fill_gaps(frame, cfg.max_gap);
    let raw = make_windows(&filled, lookback, horizon, 1)?;
    let splits = split_chronological(&raw, cfg.test_fraction, cfg.val_fraction)?;
    let train_end = splits
        .train
        .windows
        .iter()
        .map(|w| w.target_index)
        .max()
        .expect("train split is non-empty");
    let normalizer = Normalizer::fit(&filled, 0..train_end + 1)?;
    Ok(Dataset {
        splits: Splits {
            train: splits.train.normalized(&normalizer)?,
            val: splits.val.normalized(&normalizer)?,
            test: splits.test.normalized(&normalizer)?,
        },
        normalizer,
        gaps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;
    use std::io::Write;

    fn ts(day: u32, hour: u32) -> NaiveDateTime {
        NaiveDate::from_ymd_opt(2019, 8, day).unwrap().and_hms_opt(hour, 0, 0).unwrap()
    }

    fn hourly(n: usize) -> TimeSeriesFrame {
        let start = ts(19, 0);
        let stamps: Vec<_> = (0..n).map(|i| start + Duration::hours(i as i64)).collect();
        let co2: Vec<f64> = (0..n).map(|i| 400.0 + i as f64).collect();
        TimeSeriesFrame::from_measurements(stamps, co2, vec![21.0; n], vec![15.0; n]).unwrap()
    }

    fn write_csv(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_and_derives_calendar() {
        let f = write_csv(
            "timestamp,co2_in,t_in,t_out,extra\n\
             2019-08-19T14:00,500,21,18,x\n\
             2019-08-19T15:00,510,21.5,18.5,y\n\
             2019-08-19T16:00,520,22,19,z\n",
        );
        let loaded = load_frame(f.path(), &SchemaMapping::default()).unwrap();
        let frame = loaded.frame;
        assert_eq!(frame.len(), 3);
        assert_eq!(frame.hour[0], 14.0);
        assert_eq!(frame.num_week[0], 1.0);
        assert_eq!(loaded.ignored_columns, vec!["extra".to_string()]);
    }

    #[test]
    fn out_of_order_rows_are_sorted() {
        let sorted = write_csv(
            "timestamp,co2_in,t_in,t_out\n2019-08-19T14:00,500,21,18\n2019-08-19T15:00,510,21,18\n2019-08-19T16:00,520,21,18\n",
        );
        let shuffled = write_csv(
            "timestamp,co2_in,t_in,t_out\n2019-08-19T16:00,520,21,18\n2019-08-19T14:00,500,21,18\n2019-08-19T15:00,510,21,18\n",
        );
        let a = load_frame(sorted.path(), &SchemaMapping::default()).unwrap().frame;
        let b = load_frame(shuffled.path(), &SchemaMapping::default()).unwrap().frame;
        assert_eq!(a, b);
    }

    #[test]
    fn bad_rows_report_line_numbers() {
        let f = write_csv("timestamp,co2_in,t_in,t_out\n2019-08-19T14:00,500,21,18\n2019-08-19T15:00,oops,21,18\n");
        match load_frame(f.path(), &SchemaMapping::default()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        let f = write_csv("timestamp,co2_in,t_in,t_out\n2019-08-19T14:00,500,21,18\n2019-08-19T14:00,510,21,18\n");
        assert!(matches!(
            load_frame(f.path(), &SchemaMapping::default()),
            Err(Error::DuplicateTimestamp { line: 3, .. })
        ));
        let f = write_csv("timestamp,co2_in,t_in\n2019-08-19T14:00,500,21\n");
        assert!(matches!(load_frame(f.path(), &SchemaMapping::default()), Err(Error::Parse { .. })));
    }

    #[test]
    fn schema_mapping_renames_columns() {
        let f = write_csv("time,CO2,Tin,Tout\n2019-08-19 14:00:00,500,21,18\n");
        let schema = SchemaMapping {
            timestamp: "time".into(),
            co2_in: "CO2".into(),
            t_in: "Tin".into(),
            t_out: "Tout".into(),
        };
        let frame = load_frame(f.path(), &schema).unwrap().frame;
        assert_eq!(frame.co2_in, vec![500.0]);
    }

    #[test]
    fn csv_round_trip() {
        let frame = hourly(30);
        let f = tempfile::NamedTempFile::new().unwrap();
        frame.write_csv(f.path()).unwrap();
        let back = load_frame(f.path(), &SchemaMapping::default()).unwrap();
        assert_eq!(back.frame, frame);
        assert!(back.ignored_columns.is_empty());
    }

    fn drop_rows(frame: &TimeSeriesFrame, drop: Range<usize>) -> TimeSeriesFrame {
        let keep: Vec<usize> = (0..frame.len()).filter(|i| !drop.contains(i)).collect();
        TimeSeriesFrame::from_measurements(
            keep.iter().map(|&i| frame.timestamps[i]).collect(),
            keep.iter().map(|&i| frame.co2_in[i]).collect(),
            keep.iter().map(|&i| frame.t_in[i]).collect(),
            keep.iter().map(|&i| frame.t_out[i]).collect(),
        )
        .unwrap()
    }

    #[test]
    fn no_gaps_is_identity() {
        let frame = hourly(20);
        let (out, report) = fill_gaps(&frame, 3);
        assert_eq!(out, frame);
        assert!(report.gaps.is_empty());
    }

    #[test]
    fn short_gap_forward_filled() {
        let full = hourly(20);
        let frame = drop_rows(&full, 5..7);
        let (out, report) = fill_gaps(&frame, 3);
        assert_eq!(out.len(), 20);
        assert_eq!(report.gaps.len(), 1);
        assert_eq!(report.gaps[0].missing_hours, 2);
        assert!(report.gaps[0].filled);
        assert_eq!(out.co2_in[5], full.co2_in[4]);
        assert_eq!(out.co2_in[6], full.co2_in[4]);
        assert_eq!(out.hour, full.hour);
        assert!(out.valid.iter().all(|&v| v));
        assert!(report.to_text().contains("forward-filled"));
    }

    #[test]
    fn long_gap_left_as_hole() {
        let frame = drop_rows(&hourly(40), 10..20);
        let (out, report) = fill_gaps(&frame, 3);
        assert_eq!(out.len(), 40);
        assert_eq!(report.holes(), 1);
        assert!((10..20).all(|i| !out.valid[i]));
        let windows = make_windows(&out, 5, 1, 1).unwrap();
        for w in &windows.windows {
            assert!(w.target_index < 10 || w.start >= 20);
        }
    }

    #[test]
    fn normalizer_examples() {
        let mut frame = hourly(24);
        frame.co2_in = (0..24).map(|i| if i % 2 == 0 { 400.0 } else { 1200.0 }).collect();
        frame.t_in = (0..24).map(|i| 20.0 + i as f64).collect();
        frame.t_out = (0..24).map(|i| 10.0 + i as f64).collect();
        // num_week must vary for a fit; span two days.
        frame.num_week = (0..24).map(|i| if i < 12 { 1.0 } else { 2.0 }).collect();
        let n = Normalizer::fit(&frame, 0..24).unwrap();
        assert_eq!(n.scale(0, 800.0), 0.5);
        assert_eq!(n.unscale(0, 0.0), 400.0);
        assert_eq!(n.unscale(0, 1.0), 1200.0);
        assert_eq!(n.scale(0, 1300.0), 1.125);
        let x = 731.123456;
        assert!((n.unscale(0, n.scale(0, x)) - x).abs() < 1e-12);
    }

    #[test]
    fn constant_feature_is_named() {
        let frame = hourly(24);
        match Normalizer::fit(&frame, 0..24) {
            Err(Error::ConstantFeature(name)) => assert_eq!(name, "t_in"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn window_counts() {
        assert_eq!(make_windows(&hourly(30), 24, 1, 1).unwrap().len(), 6);
        assert_eq!(make_windows(&hourly(24), 24, 1, 1).unwrap().len(), 0);
        assert_eq!(make_windows(&hourly(10), 24, 1, 1).unwrap().len(), 0);
        assert_eq!(make_windows(&hourly(40), 5, 3, 2).unwrap().len(), 17);
        let set = make_windows(&hourly(30), 4, 2, 1).unwrap();
        for w in &set.windows {
            assert_eq!(w.target_index, w.last_input_index() + 2);
            assert_eq!(w.target, 400.0 + w.target_index as f64);
        }
    }

    #[test]
    fn windows_skip_hole() {
        let mut frame = hourly(30);
        frame.valid[10] = false;
        let set = make_windows(&frame, 5, 1, 1).unwrap();
        assert!(!set.is_empty());
        for w in &set.windows {
            assert!(!(w.start..=w.target_index).contains(&10));
        }
    }

    #[test]
    fn windows_skip_unfilled_discontinuity() {
        let frame = drop_rows(&hourly(30), 10..12);
        let set = make_windows(&frame, 5, 1, 1).unwrap();
        for w in &set.windows {
            let first = frame.timestamps[w.start];
            let last = frame.timestamps[w.target_index];
            assert_eq!((last - first).num_hours() as usize, w.target_index - w.start);
        }
    }

    #[test]
    fn split_sizes_and_order() {
        let set = make_windows(&hourly(104), 4, 1, 1).unwrap();
        assert_eq!(set.len(), 100);
        let s = split_chronological(&set, 0.2, 0.1).unwrap();
        assert_eq!(s.test.len(), 20);
        assert!(s.val.len() <= 8 && s.val.len() >= 4);
        assert!(s.train.len() <= 72 && s.train.len() >= 64);
        let max_train = s.train.windows.iter().map(|w| w.target_index).max().unwrap();
        let min_test = s.test.windows.iter().map(|w| w.target_index).min().unwrap();
        assert!(max_train < min_test);
    }

    #[test]
    fn split_errors() {
        let set = make_windows(&hourly(104), 4, 1, 1).unwrap();
        assert!(split_chronological(&set, 0.0, 0.1).is_err());
        assert!(split_chronological(&set, 0.6, 0.5).is_err());
        let tiny = make_windows(&hourly(8), 4, 1, 1).unwrap();
        assert!(matches!(split_chronological(&tiny, 0.2, 0.1), Err(Error::Data(_))));
    }

    #[test]
    fn leakage_audit_on_toy_frame() {
        // 50 windows; exhaustive check of every train/val/test index pair.
        let set = make_windows(&hourly(52), 2, 1, 1).unwrap();
        assert_eq!(set.len(), 50);
        let s = split_chronological(&set, 0.2, 0.1).unwrap();
        for a in &s.train.windows {
            for b in s.val.windows.iter().chain(&s.test.windows) {
                assert!(a.target_index < b.start);
            }
        }
        for a in &s.val.windows {
            for b in &s.test.windows {
                assert!(a.target_index < b.start);
            }
        }
    }

    #[test]
    fn dataset_normalizes_with_training_range() {
        let mut frame = hourly(24 * 14);
        frame.t_in = (0..frame.len()).map(|i| 20.0 + (i % 7) as f64).collect();
        frame.t_out = (0..frame.len()).map(|i| 10.0 + (i % 5) as f64).collect();
        let ds = build_dataset(&frame, 24, 1, &SplitConfig::default()).unwrap();
        let train_max = ds.splits.train.windows.iter().map(|w| w.target_index).max().unwrap();
        assert_eq!(ds.normalizer.max[0], frame.co2_in[train_max]);
        assert!(ds.splits.train.windows.iter().all(|w| (0.0..=1.0).contains(&w.target)));
        // co2 keeps rising, so test targets extrapolate above 1.
        assert!(ds.splits.test.windows.iter().all(|w| w.target > 1.0));
        assert_eq!(ds.splits.test.normalizer.as_ref(), Some(&ds.normalizer));
    }
}
