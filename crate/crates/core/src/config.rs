//! Particle configurations on the line.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Particle color: a typed label, or a neutral tag recording the two types
/// that merged to form it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "ColorRepr", into = "ColorRepr")]
pub enum Color {
    Typed(i32),
    /// Unordered pair, stored with the smaller label first.
    Neutral(i32, i32),
}

pub const POSITIVE: Color = Color::Typed(1);
pub const NEGATIVE: Color = Color::Typed(-1);
/// The neutral color of the two-type couplings.
pub const NEUTRAL: Color = Color::Neutral(-1, 1);

impl Color {
    pub fn neutral(i: i32, j: i32) -> Result<Self> {
        if i == j {
            return Err(Error::DegenerateNeutral(i));
        }
        Ok(Color::Neutral(i.min(j), i.max(j)))
    }

    pub fn label(self) -> Option<i32> {
        match self {
            Color::Typed(i) => Some(i),
            Color::Neutral(..) => None,
        }
    }

    pub fn is_typed(self) -> bool {
        matches!(self, Color::Typed(_))
    }

    pub fn is_neutral(self) -> bool {
        matches!(self, Color::Neutral(..))
    }

    /// True for the typed color `i` and for every neutral tag containing `i`.
    pub fn involves(self, i: i32) -> bool {
        match self {
            Color::Typed(l) => l == i,
            Color::Neutral(a, b) => a == i || b == i,
        }
    }
}

impl fmt::Display for Color {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Color::Typed(i) => write!(f, "{i}"),
            Color::Neutral(a, b) => write!(f, "{{{a},{b}}}"),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ColorRepr {
    Label(i32),
    Pair([i32; 2]),
}

impl TryFrom<ColorRepr> for Color {
    type Error = Error;

    fn try_from(r: ColorRepr) -> Result<Self> {
        match r {
            ColorRepr::Label(i) => Ok(Color::Typed(i)),
            ColorRepr::Pair([i, j]) => Color::neutral(i, j),
        }
    }
}

impl From<Color> for ColorRepr {
    fn from(c: Color) -> Self {
        match c {
            Color::Typed(i) => ColorRepr::Label(i),
            Color::Neutral(a, b) => ColorRepr::Pair([a, b]),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub id: u64,
    pub color: Color,
    pub position: f64,
    pub marked: bool,
}

/// A finite configuration, sorted by position (ties broken by id).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    pub time: f64,
    pub particles: Vec<Particle>,
}

impl Configuration {
    pub fn empty(time: f64) -> Self {
        Self {
            time,
            particles: Vec::new(),
        }
    }

    /// Builds a configuration from already-identified particles, sorting them.
    pub fn from_particles(time: f64, mut particles: Vec<Particle>) -> Self {
        sort_particles(&mut particles);
        Self { time, particles }
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn count(&self, color: Color) -> usize {
        self.particles.iter().filter(|p| p.color == color).count()
    }

    /// Number of particles whose color is the typed label `i`.
    pub fn count_label(&self, i: i32) -> usize {
        self.count(Color::Typed(i))
    }

    pub fn typed_labels(&self) -> BTreeSet<i32> {
        self.particles.iter().filter_map(|p| p.color.label()).collect()
    }

    pub fn positions(&self) -> impl Iterator<Item = f64> + '_ {
        self.particles.iter().map(|p| p.position)
    }

    /// The configuration restricted to particles satisfying `keep`.
    pub fn filtered(&self, keep: impl Fn(&Particle) -> bool) -> Self {
        Self {
            time: self.time,
            particles: self.particles.iter().copied().filter(|p| keep(p)).collect(),
        }
    }

    pub fn is_sorted(&self) -> bool {
        self.particles.windows(2).all(|w| w[0].position <= w[1].position)
    }

    pub fn max_id(&self) -> Option<u64> {
        self.particles.iter().map(|p| p.id).max()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let mut c: Configuration = serde_json::from_str(s)?;
        sort_particles(&mut c.particles);
        Ok(c)
    }
}

pub(crate) fn sort_particles(ps: &mut [Particle]) {
    ps.sort_by(|a, b| a.position.total_cmp(&b.position).then(a.id.cmp(&b.id)));
}

/// Builds a sorted configuration with fresh ids `0..n` in input order, all unmarked.
pub fn make_configuration(entries: &[(Color, f64)], time: f64) -> Result<Configuration> {
    if !time.is_finite() {
        return Err(Error::param(format!("time must be finite, got {time}")));
    }
    let mut particles = Vec::with_capacity(entries.len());
    for (index, &(color, position)) in entries.iter().enumerate() {
        if !position.is_finite() {
            return Err(Error::NonFinitePosition { index, value: position });
        }
        if let Color::Neutral(a, b) = color {
            if a == b {
                return Err(Error::DegenerateNeutral(a));
            }
        }
        particles.push(Particle {
            id: index as u64,
            color,
            position,
            marked: false,
        });
    }
    Ok(Configuration::from_particles(time, particles))
}

/// True iff no two particles of distinct typed colors share a position.
pub fn validate_nontrivial(c: &Configuration) -> bool {
    let ps = &c.particles;
    let mut i = 0;
    while i < ps.len() {
        let mut j = i;
        let mut label: Option<i32> = None;
        while j < ps.len() && ps[j].position == ps[i].position {
            if let Some(l) = ps[j].color.label() {
                match label {
                    None => label = Some(l),
                    Some(prev) if prev != l => return false,
                    _ => {}
                }
            }
            j += 1;
        }
        i = j;
    }
    true
}

/// First position shared by two distinct typed colors, if any.
pub(crate) fn trivial_position(c: &Configuration) -> Option<f64> {
    if validate_nontrivial(c) {
        return None;
    }
    c.particles.windows(2).find_map(|w| {
        let (a, b) = (w[0], w[1]);
        (a.position == b.position && a.color.is_typed() && b.color.is_typed() && a.color != b.color)
            .then_some(a.position)
    })
}

/// True iff every typed color occupies a single contiguous run of the sorted
/// order; neutral particles are ignored.
pub fn validate_ordered(c: &Configuration) -> bool {
    let mut seen = BTreeSet::new();
    let mut current: Option<i32> = None;
    for l in c.particles.iter().filter_map(|p| p.color.label()) {
        if current != Some(l) {
            if !seen.insert(l) {
                return false;
            }
            current = Some(l);
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(entries: &[(i32, f64)]) -> Configuration {
        let e: Vec<_> = entries.iter().map(|&(l, x)| (Color::Typed(l), x)).collect();
        make_configuration(&e, 0.0).unwrap()
    }

    #[test]
    fn builds_sorted_configuration() {
        let c = cfg(&[(1, 1.0), (-1, -1.0)]);
        assert_eq!(c.len(), 2);
        assert!(c.is_sorted());
        assert_eq!(c.particles[0].color, NEGATIVE);
        assert!(c.particles.iter().all(|p| !p.marked));
        assert!(make_configuration(&[], 0.0).unwrap().is_empty());
    }

    #[test]
    fn rejects_non_finite_positions() {
        let err = make_configuration(&[(POSITIVE, 0.0), (NEGATIVE, f64::NAN)], 0.0);
        assert!(matches!(err, Err(Error::NonFinitePosition { index: 1, .. })));
        assert!(make_configuration(&[(POSITIVE, f64::INFINITY)], 0.0).is_err());
    }

    #[test]
    fn nontriviality() {
        let coincident = cfg(&[(1, 0.0), (-1, 0.0)]);
        assert!(!validate_nontrivial(&coincident));
        assert_eq!(trivial_position(&coincident), Some(0.0));
        assert!(validate_nontrivial(&cfg(&[(1, 1.0), (-1, -1.0)])));
        assert!(validate_nontrivial(&cfg(&[(1, 0.0), (1, 0.0)])));
        let with_neutral = make_configuration(&[(POSITIVE, 0.0), (NEUTRAL, 0.0)], 0.0).unwrap();
        assert!(validate_nontrivial(&with_neutral));
    }

    #[test]
    fn orderedness() {
        assert!(validate_ordered(&cfg(&[(-1, -2.0), (-1, -1.0), (1, 3.0)])));
        assert!(!validate_ordered(&cfg(&[(1, -1.0), (-1, 0.0), (1, 1.0)])));
        assert!(validate_ordered(&cfg(&[])));
        let mixed = make_configuration(
            &[(NEGATIVE, -1.0), (NEUTRAL, 0.0), (NEGATIVE, 0.5), (POSITIVE, 1.0)],
            0.0,
        )
        .unwrap();
        assert!(validate_ordered(&mixed));
    }

    #[test]
    fn json_shape() {
        let c = make_configuration(&[(POSITIVE, 0.5), (NEUTRAL, -0.25)], 1.5).unwrap();
        let s = c.to_json().unwrap();
        assert_eq!(
            s,
            r#"{"time":1.5,"particles":[{"id":1,"color":[-1,1],"position":-0.25,"marked":false},{"id":0,"color":1,"position":0.5,"marked":false}]}"#
        );
        assert_eq!(Configuration::from_json(&s).unwrap(), c);
        assert!(Configuration::from_json(
            r#"{"time":0,"particles":[{"id":0,"color":[2,2],"position":0,"marked":false}]}"#
        )
        .is_err());
    }

    #[test]
    fn neutral_tags_are_unordered() {
        assert_eq!(Color::neutral(3, -2).unwrap(), Color::neutral(-2, 3).unwrap());
        assert!(Color::neutral(1, 1).is_err());
        assert!(Color::neutral(-1, 2).unwrap().involves(2));
        assert!(!Color::neutral(-1, 2).unwrap().involves(1));
    }
}
