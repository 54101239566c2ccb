use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::channel::{ClickRecord, DetectorLabel};

/// Closed time interval [start, start + width] in s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub start: f64,
    pub width: f64,
}

impl TimeWindow {
    pub fn new(start: f64, width: f64) -> Self {
        Self { start, width }
    }

    pub fn end(&self) -> f64 {
        self.start + self.width
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.start && t <= self.end()
    }
}

/// Click counts per detector in fixed time bins (relative to the excitation reference).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionHistogram {
    pub bin_edges: Vec<f64>,
    /// counts[detector index][bin]
    pub counts: [Vec<f64>; 4],
}

impl DetectionHistogram {
    pub fn uniform(start: f64, bin_width: f64, bins: usize) -> Result<Self, AnalysisError> {
        if !(bin_width > 0.0) || bins == 0 {
            return Err(AnalysisError::InvalidInput("histogram needs positive bin width and at least one bin".into()));
        }
        let bin_edges = (0..=bins).map(|i| start + bin_width * i as f64).collect();
        Ok(Self { bin_edges, counts: std::array::from_fn(|_| vec![0.0; bins]) })
    }

    pub fn bins(&self) -> usize {
        self.bin_edges.len() - 1
    }

    pub fn bin_centre(&self, i: usize) -> f64 {
        0.5 * (self.bin_edges[i] + self.bin_edges[i + 1])
    }

    pub fn bin_width(&self, i: usize) -> f64 {
        self.bin_edges[i + 1] - self.bin_edges[i]
    }

    fn bin_of(&self, t: f64) -> Option<usize> {
        let first = *self.bin_edges.first()?;
        let last = *self.bin_edges.last()?;
        if t < first || t >= last {
            return None;
        }
        Some(self.bin_edges.partition_point(|e| *e <= t) - 1)
    }

    pub fn add_click(&mut self, click: &ClickRecord) {
        if let Some(b) = self.bin_of(click.timestamp) {
            self.counts[click.detector.index()][b] += 1.0;
        }
    }

    pub fn add_counts(&mut self, detector: DetectorLabel, bin: usize, counts: f64) {
        self.counts[detector.index()][bin] += counts;
    }

    pub fn from_clicks(clicks: &[ClickRecord], start: f64, bin_width: f64, bins: usize) -> Result<Self, AnalysisError> {
        let mut h = Self::uniform(start, bin_width, bins)?;
        for c in clicks {
            h.add_click(c);
        }
        Ok(h)
    }

    /// All detectors summed.
    pub fn total(&self, bin: usize) -> f64 {
        self.counts.iter().map(|c| c[bin]).sum()
    }

    /// Counts and covered duration of bins whose centre lies in `w`.
    fn sum_in(&self, w: &TimeWindow) -> (f64, f64) {
        (0..self.bins())
            .filter(|&i| w.contains(self.bin_centre(i)))
            .fold((0.0, 0.0), |(c, d), i| (c + self.total(i), d + self.bin_width(i)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SbrEstimate {
    pub in_window: f64,
    pub expected_background: f64,
    /// None when the background estimate is zero.
    pub ratio: Option<f64>,
    pub unbounded: bool,
}

/// (in-window − expected background)/expected background, with the flat background measured
/// in side bands away from the signal.
pub fn sbr(hist: &DetectionHistogram, window: &TimeWindow, sidebands: &[TimeWindow]) -> Result<SbrEstimate, AnalysisError> {
    let (in_window, covered) = hist.sum_in(window);
    if covered == 0.0 {
        return Err(AnalysisError::InvalidInput("acceptance window covers no histogram bins".into()));
    }
    let (bg_counts, bg_duration) = sidebands.iter().map(|s| hist.sum_in(s)).fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    if bg_duration == 0.0 {
        return Err(AnalysisError::InvalidInput("side bands cover no histogram bins".into()));
    }
    let expected_background = bg_counts / bg_duration * covered;
    let (ratio, unbounded) = if expected_background > 0.0 {
        (Some((in_window - expected_background) / expected_background), false)
    } else {
        (None, true)
    };
    Ok(SbrEstimate { in_window, expected_background, ratio, unbounded })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn background_free_is_unbounded() {
        let mut h = DetectionHistogram::uniform(0.0, 1e-9, 100).unwrap();
        h.add_counts(DetectorLabel::H1, 10, 50.0);
        let s = sbr(&h, &TimeWindow::new(5e-9, 10e-9), &[TimeWindow::new(60e-9, 40e-9)]).unwrap();
        assert!(s.unbounded);
        assert!(s.ratio.is_none());
    }

    #[test]
    fn equal_signal_and_background() {
        let mut h = DetectionHistogram::uniform(0.0, 1e-9, 100).unwrap();
        for b in 0..100 {
            h.add_counts(DetectorLabel::V2, b, 2.0);
        }
        // 10 window bins carry 20 background counts; add 20 signal counts.
        h.add_counts(DetectorLabel::H2, 12, 20.0);
        let s = sbr(&h, &TimeWindow::new(10e-9, 10e-9), &[TimeWindow::new(50e-9, 50e-9)]).unwrap();
        assert!((s.ratio.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn clicks_are_binned() {
        let clicks = [ClickRecord { detector: DetectorLabel::V1, timestamp: 3.5e-9, origin: crate::channel::ClickOrigin::Dark }];
        let h = DetectionHistogram::from_clicks(&clicks, 0.0, 1e-9, 10).unwrap();
        assert_eq!(h.counts[DetectorLabel::V1.index()][3], 1.0);
    }
}
