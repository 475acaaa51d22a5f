//! Start/stop section timers with parent/child nesting.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Section {
    pub name: String,
    pub parent: Option<usize>,
    pub calls: u64,
    pub total: Duration,
}

#[derive(Clone, Debug, Default)]
pub struct TimingReport {
    sections: Vec<Section>,
    open: Vec<(usize, Instant)>,
}

impl TimingReport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn sections(&self) -> &[Section] {
        &self.sections
    }

    pub fn get(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.name == name)
    }

    pub fn parent_of(&self, section: &Section) -> Option<&Section> {
        section.parent.map(|p| &self.sections[p])
    }

    fn depth(&self, mut idx: usize) -> usize {
        let mut depth = 0;
        while let Some(p) = self.sections[idx].parent {
            depth += 1;
            idx = p;
        }
        depth
    }

    /// Opens `name` under the innermost open section. A name may only ever
    /// appear under one parent.
    pub fn start(&mut self, name: &str) -> Result<()> {
        let parent = self.open.last().map(|&(i, _)| i);
        let idx = match self.sections.iter().position(|s| s.name == name) {
            Some(i) => {
                if self.sections[i].parent != parent {
                    return Err(Error::Nesting(format!(
                        "{name:?} opened under {:?}, previously under {:?}",
                        parent.map(|p| self.sections[p].name.as_str()),
                        self.sections[i].parent.map(|p| self.sections[p].name.as_str()),
                    )));
                }
                if self.open.iter().any(|&(o, _)| o == i) {
                    return Err(Error::Nesting(format!("{name:?} is already open")));
                }
                i
            }
            None => {
                self.sections.push(Section {
                    name: name.to_string(),
                    parent,
                    calls: 0,
                    total: Duration::ZERO,
                });
                self.sections.len() - 1
            }
        };
        self.open.push((idx, Instant::now()));
        Ok(())
    }

    /// Closes `name`, which must be the innermost open section.
    pub fn stop(&mut self, name: &str) -> Result<()> {
        let now = Instant::now();
        match self.open.last() {
            Some(&(idx, started)) if self.sections[idx].name == name => {
                self.open.pop();
                let s = &mut self.sections[idx];
                s.calls += 1;
                s.total += now - started;
                Ok(())
            }
            Some(&(idx, _)) => Err(Error::Nesting(format!(
                "stop {name:?} while {:?} is innermost",
                self.sections[idx].name
            ))),
            None => Err(Error::Nesting(format!("stop {name:?} with no open section"))),
        }
    }

    /// Sum of all top-level section times.
    pub fn top_level_total(&self) -> Duration {
        self.sections
            .iter()
            .filter(|s| s.parent.is_none())
            .map(|s| s.total)
            .sum()
    }

    /// Checks that every child's accumulated time is within its parent's.
    pub fn nesting_holds(&self) -> bool {
        self.sections.iter().all(|s| match s.parent {
            Some(p) => s.total <= self.sections[p].total,
            None => true,
        })
    }

    /// Children listed after their parent, in first-seen order.
    fn ordered(&self) -> Vec<usize> {
        fn visit(r: &TimingReport, parent: Option<usize>, out: &mut Vec<usize>) {
            for (i, s) in r.sections.iter().enumerate() {
                if s.parent == parent {
                    out.push(i);
                    visit(r, Some(i), out);
                }
            }
        }
        let mut out = Vec::with_capacity(self.sections.len());
        visit(self, None, &mut out);
        out
    }

    /// Breakdown table; percentages are relative to `wall`.
    pub fn format_table(&self, wall: Duration) -> String {
        let mut out = String::new();
        let wall_s = wall.as_secs_f64();
        let _ = writeln!(out, "{:<24} {:>10} {:>12} {:>8}", "section", "calls", "wall_s", "percent");
        for i in self.ordered() {
            let s = &self.sections[i];
            let label = format!("{}{}", "  ".repeat(self.depth(i)), s.name);
            let t = s.total.as_secs_f64();
            let pct = if wall_s > 0.0 { 100.0 * t / wall_s } else { 0.0 };
            let _ = writeln!(out, "{label:<24} {:>10} {t:>12.6} {pct:>8.2}", s.calls);
        }
        let _ = writeln!(out, "{:<24} {:>10} {wall_s:>12.6} {:>8.2}", "total", "", 100.0);
        out
    }
}

/// Runs `thunk` inside the section `name`. Nesting errors are reported by
/// debug assertions; release builds drop the measurement instead.
pub fn timed_section<T>(
    report: &mut TimingReport,
    name: &str,
    thunk: impl FnOnce(&mut TimingReport) -> T,
) -> T {
    let started = report.start(name);
    debug_assert!(started.is_ok(), "{:?}", started);
    let out = thunk(report);
    if started.is_ok() {
        let stopped = report.stop(name);
        debug_assert!(stopped.is_ok(), "{:?}", stopped);
    }
    out
}
