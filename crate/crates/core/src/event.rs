//! Event log and trajectories.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::config::Configuration;
use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    Branch {
        parent: u64,
        child: u64,
    },
    Annihilate {
        a: u64,
        b: u64,
        location: f64,
    },
    MergeToNeutral {
        a: u64,
        b: u64,
        new_id: u64,
        location: f64,
    },
    /// A marked neutral `from` meets an unmarked particle `to`; the mark
    /// moves onto `to`'s path under the fresh id `marked`.
    MarkTransfer {
        from: u64,
        to: u64,
        marked: u64,
        location: f64,
    },
    Tau1MarkCreated {
        source: u64,
        marked: u64,
    },
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::Branch { .. } => "branch",
            EventKind::Annihilate { .. } => "annihilate",
            EventKind::MergeToNeutral { .. } => "merge_to_neutral",
            EventKind::MarkTransfer { .. } => "mark_transfer",
            EventKind::Tau1MarkCreated { .. } => "tau1_mark_created",
        }
    }

    /// Whether this event is a collision between two interacting particles.
    pub fn is_collision(&self) -> bool {
        matches!(
            self,
            EventKind::Annihilate { .. } | EventKind::MergeToNeutral { .. } | EventKind::MarkTransfer { .. }
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Trajectory {
    /// Configurations at the observation times, in time order.
    pub snapshots: Vec<Configuration>,
    pub events: Vec<Event>,
    /// `(child, parent)` pairs in creation order, so sorted by child id.
    pub lineage: Vec<(u64, u64)>,
    /// Population cap was exceeded; the run stopped early.
    pub truncated: bool,
    /// Time at which the dynamics stopped before the horizon, if they did.
    pub terminated_at: Option<f64>,
}

impl Trajectory {
    pub fn last(&self) -> Option<&Configuration> {
        self.snapshots.last()
    }

    pub fn parent_of(&self, id: u64) -> Option<u64> {
        self.lineage
            .binary_search_by_key(&id, |&(c, _)| c)
            .ok()
            .map(|i| self.lineage[i].1)
    }

    pub fn collision_count(&self) -> usize {
        self.events.iter().filter(|e| e.kind.is_collision()).count()
    }

    /// Event log in CSV form: `time,kind,id_a,id_b,location`.
    pub fn write_events_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "time,kind,id_a,id_b,location")?;
        for e in &self.events {
            let (a, b, loc) = match e.kind {
                EventKind::Branch { parent, child } => (parent, child, None),
                EventKind::Annihilate { a, b, location } => (a, b, Some(location)),
                EventKind::MergeToNeutral { a, b, location, .. } => (a, b, Some(location)),
                EventKind::MarkTransfer { from, to, location, .. } => (from, to, Some(location)),
                EventKind::Tau1MarkCreated { source, marked } => (source, marked, None),
            };
            match loc {
                Some(x) => writeln!(w, "{},{},{a},{b},{x}", e.time, e.kind.name())?,
                None => writeln!(w, "{},{},{a},{b},", e.time, e.kind.name())?,
            }
        }
        Ok(())
    }
}
