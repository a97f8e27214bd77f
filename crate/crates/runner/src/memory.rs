//! Resident-set sampling of a child process.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use crate::error::RunError;

pub const SAMPLE_INTERVAL: Duration = Duration::from_millis(100);

const GIB: f64 = (1u64 << 30) as f64;

/// Resident set size of `pid` in GiB, or `None` once the process is gone.
pub fn rss_gib(pid: u32) -> Option<f64> {
    let status = std::fs::read_to_string(format!("/proc/{pid}/status")).ok()?;
    let line = status.lines().find(|l| l.starts_with("VmRSS:"))?;
    let kib: f64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kib * 1024.0 / GIB)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MemoryStats {
    pub avg_gib: f64,
    pub peak_gib: f64,
    pub sample_count: usize,
}

impl MemoryStats {
    pub fn from_samples(samples: &[f64]) -> Result<MemoryStats, RunError> {
        if samples.is_empty() {
            return Err(RunError::ProcessGone);
        }
        Ok(MemoryStats {
            avg_gib: samples.iter().sum::<f64>() / samples.len() as f64,
            peak_gib: samples.iter().copied().fold(f64::MIN, f64::max),
            sample_count: samples.len(),
        })
    }
}

/// Samples a process on a fixed interval in a background thread, starting
/// immediately.
pub struct MemorySampler {
    stop: Arc<AtomicBool>,
    samples: Arc<Mutex<Vec<f64>>>,
    over_cap: Arc<AtomicU64>,
    handle: Option<JoinHandle<()>>,
}

impl MemorySampler {
    pub fn start(pid: u32, interval: Duration, cap_gib: f64) -> MemorySampler {
        let stop = Arc::new(AtomicBool::new(false));
        let samples = Arc::new(Mutex::new(Vec::new()));
        let over_cap = Arc::new(AtomicU64::new(0));
        let handle = {
            let (stop, samples, over_cap) = (stop.clone(), samples.clone(), over_cap.clone());
            thread::spawn(move || {
                while !stop.load(Ordering::Acquire) {
                    let Some(gib) = rss_gib(pid) else { break };
                    samples.lock().unwrap_or_else(|e| e.into_inner()).push(gib);
                    if gib > cap_gib {
                        over_cap.store(gib.to_bits(), Ordering::Release);
                    }
                    thread::park_timeout(interval);
                }
            })
        };
        MemorySampler {
            stop,
            samples,
            over_cap,
            handle: Some(handle),
        }
    }

    /// Highest sample seen above the cap, if any.
    pub fn exceeded(&self) -> Option<f64> {
        match self.over_cap.load(Ordering::Acquire) {
            0 => None,
            bits => Some(f64::from_bits(bits)),
        }
    }

    pub fn stop(mut self) -> Result<MemoryStats, RunError> {
        self.halt();
        let samples = self.samples.lock().unwrap_or_else(|e| e.into_inner());
        MemoryStats::from_samples(&samples)
    }

    fn halt(&mut self) {
        self.stop.store(true, Ordering::Release);
        if let Some(h) = self.handle.take() {
            h.thread().unpark();
            let _ = h.join();
        }
    }
}

impl Drop for MemorySampler {
    fn drop(&mut self) {
        self.halt();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stats_from_samples() {
        let s = MemoryStats::from_samples(&[1.0, 1.2, 1.4]).unwrap();
        assert!((s.avg_gib - 1.2).abs() < 1e-12);
        assert_eq!(s.peak_gib, 1.4);
        assert_eq!(s.sample_count, 3);
        let one = MemoryStats::from_samples(&[2.0]).unwrap();
        assert_eq!((one.avg_gib, one.peak_gib), (2.0, 2.0));
        assert!(matches!(MemoryStats::from_samples(&[]), Err(RunError::ProcessGone)));
    }

    #[test]
    fn samples_own_process() {
        let rss = rss_gib(std::process::id()).unwrap();
        assert!(rss > 0.0);
        let sampler = MemorySampler::start(std::process::id(), Duration::from_millis(10), 1e9);
        thread::sleep(Duration::from_millis(55));
        let stats = sampler.stop().unwrap();
        assert!(stats.sample_count >= 3);
        assert!(stats.peak_gib >= stats.avg_gib);
    }

    #[test]
    fn vanished_process_yields_no_samples() {
        let mut child = std::process::Command::new("true").spawn().unwrap();
        let pid = child.id();
        child.wait().unwrap();
        let sampler = MemorySampler::start(pid, Duration::from_millis(10), 1e9);
        assert!(matches!(sampler.stop(), Err(RunError::ProcessGone)));
    }
}
