use std::ops::Range;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::hrf::{canonical_hrf, HrfParams};
use crate::error::{Error, Result};

/// Category identifier attached to each trial.
pub type Label = u32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub onset: f64,
    pub duration: f64,
    pub label: Label,
    /// 1-based regressor (column) index.
    pub regressor: usize,
}

/// The experimental paradigm: one regressor per trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventTable {
    events: Vec<Event>,
    n_scans: usize,
    tr: f64,
}

impl EventTable {
    /// Builds a table from events; the events are sorted by regressor index before validation.
    pub fn new(mut events: Vec<Event>, n_scans: usize, tr: f64) -> Result<Self> {
        if n_scans == 0 {
            return Err(Error::Design("n_scans must be positive".into()));
        }
        if !(tr > 0.0 && tr.is_finite()) {
            return Err(Error::Design(format!("tr must be positive, got {tr}")));
        }
        if events.is_empty() {
            return Err(Error::Design("event table is empty".into()));
        }
        events.sort_by_key(|e| e.regressor);
        let q = events.len();
        let span = n_scans as f64 * tr;
        for (i, e) in events.iter().enumerate() {
            if e.regressor != i + 1 {
                return Err(if i > 0 && events[i - 1].regressor == e.regressor {
                    Error::Design(format!(
                        "regressor index {} is used by more than one event",
                        e.regressor
                    ))
                } else {
                    Error::Design(format!(
                        "regressor indices must cover 1..={q}; found {}",
                        e.regressor
                    ))
                });
            }
            if !(e.onset >= 0.0 && e.onset.is_finite()) {
                return Err(Error::Design(format!(
                    "event {} has invalid onset {}",
                    e.regressor, e.onset
                )));
            }
            if !(e.duration >= 0.0 && e.duration.is_finite()) {
                return Err(Error::Design(format!(
                    "event {} has invalid duration {}",
                    e.regressor, e.duration
                )));
            }
            if e.onset + e.duration > span + 1e-9 {
                return Err(Error::Design(format!(
                    "event {} ends at {:.3} s, after the last scan ({span:.3} s)",
                    e.regressor,
                    e.onset + e.duration
                )));
            }
            if i > 0 && e.onset <= events[i - 1].onset {
                return Err(Error::Design(format!(
                    "onsets must increase with regressor index (event {})",
                    e.regressor
                )));
            }
        }
        Ok(Self {
            events,
            n_scans,
            tr,
        })
    }

    /// Events with regressor indices assigned in onset order.
    pub fn from_onsets(onsets: &[(f64, f64, Label)], n_scans: usize, tr: f64) -> Result<Self> {
        let events = onsets
            .iter()
            .enumerate()
            .map(|(i, &(onset, duration, label))| Event {
                onset,
                duration,
                label,
                regressor: i + 1,
            })
            .collect();
        Self::new(events, n_scans, tr)
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn n_scans(&self) -> usize {
        self.n_scans
    }

    pub fn tr(&self) -> f64 {
        self.tr
    }

    pub fn q(&self) -> usize {
        self.events.len()
    }

    pub fn labels(&self) -> Vec<Label> {
        self.events.iter().map(|e| e.label).collect()
    }
}

/// n_scans × (q + k) design: stimulus columns first, then nuisance columns, intercept last.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub values: DMatrix<f64>,
    pub stimulus_columns: Range<usize>,
    pub intercept_column: usize,
    pub tr: f64,
}

impl DesignMatrix {
    pub fn n_scans(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_columns(&self) -> usize {
        self.values.ncols()
    }

    pub fn q(&self) -> usize {
        self.stimulus_columns.len()
    }
}

/// Microtime bins covered by an event; zero-length events occupy one bin.
pub(crate) fn event_bins(onset: f64, duration: f64, dt: f64) -> Range<usize> {
    let start = (onset / dt).round() as usize;
    let end = ((onset + duration) / dt).round() as usize;
    start..end.max(start + 1)
}

/// Microtime index sampled for scan `s` (0-based).
pub(crate) fn scan_bin(s: usize, tr: f64, dt: f64) -> usize {
    (s as f64 * tr / dt).round() as usize
}

pub fn build_design(
    events: &EventTable,
    hrf: &HrfParams,
    nuisance: Option<&DMatrix<f64>>,
) -> Result<DesignMatrix> {
    let kernel = canonical_hrf(hrf)?;
    let dt = hrf.microtime_dt;
    let n = events.n_scans();
    let tr = events.tr();
    if dt >= tr {
        return Err(Error::parameter(
            "microtime_dt",
            format!("must be shorter than tr ({tr} s)"),
        ));
    }
    let k = nuisance.map_or(0, |m| m.ncols());
    if let Some(m) = nuisance {
        if m.nrows() != n {
            return Err(Error::Dimension(format!(
                "nuisance matrix has {} rows, expected {n}",
                m.nrows()
            )));
        }
    }
    let q = events.q();
    let mut values = DMatrix::zeros(n, q + k + 1);
    let n_micro = scan_bin(n - 1, tr, dt) + 1;

    for (j, e) in events.events().iter().enumerate() {
        let bins = event_bins(e.onset, e.duration, dt);
        let mut signal = vec![0.0; n_micro];
        for b in bins.clone() {
            if b >= n_micro {
                break;
            }
            for (lag, h) in kernel.iter().enumerate() {
                let m = b + lag;
                if m >= n_micro {
                    break;
                }
                signal[m] += h;
            }
        }
        for s in 0..n {
            values[(s, j)] = signal[scan_bin(s, tr, dt)];
        }
        if values.column(j).iter().all(|&v| v == 0.0) {
            return Err(Error::Design(format!(
                "stimulus column {} is all zero",
                e.regressor
            )));
        }
    }
    if let Some(m) = nuisance {
        values.columns_mut(q, k).copy_from(m);
    }
    values.column_mut(q + k).fill(1.0);
    Ok(DesignMatrix {
        values,
        stimulus_columns: 0..q,
        intercept_column: q + k,
        tr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct evaluation of boxcar ⊛ kernel at each scan time, summing over kernel lags.
    fn brute_force_column(e: &Event, kernel: &[f64], n: usize, tr: f64, dt: f64) -> Vec<f64> {
        let start = (e.onset / dt).round() as i64;
        let end = (((e.onset + e.duration) / dt).round() as i64).max(start + 1);
        (0..n)
            .map(|s| {
                let m = (s as f64 * tr / dt).round() as i64;
                kernel
                    .iter()
                    .enumerate()
                    .filter(|(lag, _)| {
                        let src = m - *lag as i64;
                        src >= start && src < end
                    })
                    .map(|(_, h)| h)
                    .sum()
            })
            .collect()
    }

    #[test]
    fn impulse_reproduces_kernel_samples() {
        let tr = 1.0;
        let hrf = HrfParams::default();
        let ev = EventTable::from_onsets(&[(2.0, 0.0, 1)], 40, tr).unwrap();
        let x = build_design(&ev, &hrf, None).unwrap();
        let kernel = canonical_hrf(&hrf).unwrap();
        for s in 0..40 {
            let lag = s as i64 * 10 - 20;
            let expected = if lag >= 0 && (lag as usize) < kernel.len() {
                kernel[lag as usize]
            } else {
                0.0
            };
            assert!((x.values[(s, 0)] - expected).abs() < 1e-12, "scan {s}");
        }
    }

    #[test]
    fn matches_brute_force_convolution() {
        let tr = 2.26;
        let hrf = HrfParams::default();
        let ev = EventTable::from_onsets(&[(0.0, 3.0, 1), (7.3, 3.0, 2), (40.0, 1.5, 1)], 65, tr)
            .unwrap();
        let x = build_design(&ev, &hrf, None).unwrap();
        let kernel = canonical_hrf(&hrf).unwrap();
        for (j, e) in ev.events().iter().enumerate() {
            let oracle = brute_force_column(e, &kernel, 65, tr, hrf.microtime_dt);
            for (s, o) in oracle.iter().enumerate() {
                assert!((x.values[(s, j)] - o).abs() < 1e-12);
            }
        }
        assert_eq!(x.intercept_column, 3);
        assert!(x.values.column(3).iter().all(|&v| v == 1.0));
    }

    #[test]
    fn distant_events_are_orthogonal() {
        let ev = EventTable::from_onsets(&[(0.0, 3.0, 1), (60.0, 3.0, 2)], 60, 2.0).unwrap();
        let x = build_design(&ev, &HrfParams::default(), None).unwrap();
        let dot = x.values.column(0).dot(&x.values.column(1));
        assert!(dot.abs() < 1e-12, "inner product {dot}");
    }

    #[test]
    fn nuisance_columns_precede_intercept() {
        let ev = EventTable::from_onsets(&[(0.0, 3.0, 1), (20.0, 3.0, 2)], 30, 2.0).unwrap();
        let nuis = DMatrix::from_fn(30, 2, |i, j| (i * (j + 1)) as f64);
        let x = build_design(&ev, &HrfParams::default(), Some(&nuis)).unwrap();
        assert_eq!(x.n_columns(), 5);
        assert_eq!(x.values[(7, 3)], 14.0);
        assert_eq!(x.intercept_column, 4);
        let bad = DMatrix::zeros(29, 1);
        assert!(matches!(
            build_design(&ev, &HrfParams::default(), Some(&bad)),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn duplicate_regressor_is_rejected() {
        let events = vec![
            Event {
                onset: 0.0,
                duration: 3.0,
                label: 1,
                regressor: 1,
            },
            Event {
                onset: 5.0,
                duration: 3.0,
                label: 2,
                regressor: 1,
            },
        ];
        assert!(
            matches!(EventTable::new(events, 20, 2.0), Err(Error::Design(m)) if m.contains("more than one"))
        );
    }

    #[test]
    fn event_past_end_is_rejected() {
        assert!(EventTable::from_onsets(&[(38.0, 3.0, 1)], 20, 2.0).is_err());
        assert!(EventTable::from_onsets(&[(5.0, 3.0, 1), (5.0, 3.0, 2)], 20, 2.0).is_err());
    }
}
