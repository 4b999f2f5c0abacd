//! Plot-ready exports of single trajectories.

use std::io::Write;

use crate::abbm::interface;
use crate::config::Color;
use crate::error::Result;
use crate::event::Trajectory;
use crate::lattice::LatticeTrajectory;

/// `1`, `-1`, or `i|j` for a neutral.
pub fn color_label(c: Color) -> String {
    match c {
        Color::Typed(i) => i.to_string(),
        Color::Neutral(i, j) => format!("{i}|{j}"),
    }
}

/// One `(time, id, parent_id, position, color, marked)` row per live particle
/// per snapshot. `parent_id` is empty for initial particles.
pub fn export_spacetime<W: Write>(traj: &Trajectory, mut w: W) -> Result<usize> {
    writeln!(w, "time,id,parent_id,position,color,marked")?;
    let parents: std::collections::HashMap<u64, u64> = traj.lineage.iter().copied().collect();
    let mut rows = 0;
    for c in &traj.snapshots {
        for p in &c.particles {
            let parent = parents.get(&p.id).map_or(String::new(), |q| q.to_string());
            writeln!(
                w,
                "{},{},{},{},{},{}",
                c.time,
                p.id,
                parent,
                p.position,
                color_label(p.color),
                p.marked as u8
            )?;
            rows += 1;
        }
    }
    Ok(rows)
}

/// `(time, I_minus, I_plus, I, K, N)` per snapshot.
pub fn export_interface<W: Write>(traj: &Trajectory, mut w: W) -> Result<()> {
    writeln!(w, "time,I_minus,I_plus,I,K,N")?;
    for c in &traj.snapshots {
        let s = interface(c);
        writeln!(w, "{},{},{},{},{},{}", c.time, s.i_minus, s.i_plus, s.i, s.k, c.len())?;
    }
    Ok(())
}

/// JSON array of lattice snapshots.
pub fn export_lattice<W: Write>(traj: &LatticeTrajectory, w: W) -> Result<()> {
    serde_json::to_writer(w, &traj.snapshots_json())?;
    Ok(())
}
