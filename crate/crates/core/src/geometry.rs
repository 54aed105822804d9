//! Planar electrode layouts: axis-aligned rectangles in the z = 0 plane.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Real;

/// Current layout file format version.
pub const LAYOUT_VERSION: u32 = 1;

const BUNDLED_LAYOUT: &str = include_str!("../data/bundled_layout.toml");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Dc,
    Rf,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Rect<T> {
    pub x_min: T,
    pub x_max: T,
    pub y_min: T,
    pub y_max: T,
}

impl<T: Real> Rect<T> {
    pub fn new(x_min: T, x_max: T, y_min: T, y_max: T) -> Self {
        Rect { x_min, x_max, y_min, y_max }
    }

    pub fn width(&self) -> T {
        self.x_max - self.x_min
    }

    pub fn length(&self) -> T {
        self.y_max - self.y_min
    }

    pub fn is_degenerate(&self) -> bool {
        !(self.x_min < self.x_max && self.y_min < self.y_max)
            || !(self.x_min.is_finite() && self.x_max.is_finite())
            || !(self.y_min.is_finite() && self.y_max.is_finite())
    }

    /// Area shared with `other`; zero when they only touch along an edge.
    pub fn overlap_area(&self, other: &Rect<T>) -> T {
        let w = self.x_max.min(other.x_max) - self.x_min.max(other.x_min);
        let h = self.y_max.min(other.y_max) - self.y_min.max(other.y_min);
        if w > T::zero() && h > T::zero() {
            w * h
        } else {
            T::zero()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Electrode<T> {
    pub id: String,
    pub role: Role,
    pub group: String,
    #[serde(flatten)]
    pub extent: Rect<T>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real", deny_unknown_fields)]
pub struct ElectrodeLayout<T> {
    pub version: u32,
    #[serde(default)]
    pub name: String,
    /// True when the extents are an approximation of the real artwork.
    #[serde(default)]
    pub approximate: bool,
    pub ion_height_hint: T,
    #[serde(rename = "electrode", default)]
    pub electrodes: Vec<Electrode<T>>,
}

impl<T: Real> ElectrodeLayout<T> {
    pub fn new(name: &str, ion_height_hint: T, electrodes: Vec<Electrode<T>>) -> Result<Self> {
        let layout = ElectrodeLayout {
            version: LAYOUT_VERSION,
            name: name.to_string(),
            approximate: false,
            ion_height_hint,
            electrodes,
        };
        layout.validate()?;
        Ok(layout)
    }

    /// The approximate segmented surface-trap layout shipped with the crate.
    pub fn bundled() -> Self {
        Self::from_toml_str(BUNDLED_LAYOUT).expect("bundled layout is valid")
    }

    /// Checks the geometric invariants and RF tagging.
    ///
    /// A layout without any RF electrode is accepted here so that pure DC
    /// fixtures load; use [`ElectrodeLayout::validate_trap`] where an RF group
    /// is required.
    pub fn validate(&self) -> Result<()> {
        if self.version != LAYOUT_VERSION {
            return Err(Error::Layout(format!(
                "unsupported layout version {} (expected {LAYOUT_VERSION})",
                self.version
            )));
        }
        if !(self.ion_height_hint > T::zero()) {
            return Err(Error::Layout("ion_height_hint must be positive".into()));
        }
        if self.electrodes.is_empty() {
            return Err(Error::Layout("layout has no electrodes".into()));
        }
        let mut ids = BTreeSet::new();
        for e in &self.electrodes {
            if e.id.is_empty() || e.group.is_empty() {
                return Err(Error::Layout("electrode id and group must be non-empty".into()));
            }
            if !ids.insert(e.id.as_str()) {
                return Err(Error::Layout(format!("duplicate electrode id `{}`", e.id)));
            }
            if e.extent.is_degenerate() {
                return Err(Error::Layout(format!("electrode `{}` has a degenerate rectangle", e.id)));
            }
        }
        for (i, a) in self.electrodes.iter().enumerate() {
            for b in &self.electrodes[i + 1..] {
                if a.extent.overlap_area(&b.extent) > T::zero() {
                    return Err(Error::Layout(format!("electrodes `{}` and `{}` overlap", a.id, b.id)));
                }
            }
        }
        let rf_groups: BTreeSet<&str> = self
            .electrodes
            .iter()
            .filter(|e| e.role == Role::Rf)
            .map(|e| e.group.as_str())
            .collect();
        if rf_groups.len() > 1 {
            return Err(Error::Layout(format!("more than one RF group: {rf_groups:?}")));
        }
        if let Some(g) = rf_groups.iter().next() {
            if self.electrodes.iter().any(|e| e.group == *g && e.role != Role::Rf) {
                return Err(Error::Layout(format!("group `{g}` mixes RF and DC electrodes")));
            }
        }
        Ok(())
    }

    /// [`validate`](Self::validate) plus the requirement of exactly one RF group.
    pub fn validate_trap(&self) -> Result<()> {
        self.validate()?;
        self.rf_group().map(|_| ())
    }

    pub fn rf_group(&self) -> Result<&str> {
        self.electrodes
            .iter()
            .find(|e| e.role == Role::Rf)
            .map(|e| e.group.as_str())
            .ok_or_else(|| Error::Layout("no RF group".into()))
    }

    /// Group names in sorted order.
    pub fn groups(&self) -> Vec<&str> {
        let set: BTreeSet<&str> = self.electrodes.iter().map(|e| e.group.as_str()).collect();
        set.into_iter().collect()
    }

    pub fn dc_groups(&self) -> Vec<&str> {
        let set: BTreeSet<&str> = self
            .electrodes
            .iter()
            .filter(|e| e.role == Role::Dc)
            .map(|e| e.group.as_str())
            .collect();
        set.into_iter().collect()
    }

    pub fn has_group(&self, group: &str) -> bool {
        self.electrodes.iter().any(|e| e.group == group)
    }

    pub fn members<'a>(&'a self, group: &'a str) -> impl Iterator<Item = &'a Electrode<T>> + 'a {
        self.electrodes.iter().filter(move |e| e.group == group)
    }

    /// Center of the bounding box of the DC electrodes (all electrodes if none).
    pub fn center_xy(&self) -> [T; 2] {
        let dc: Vec<&Electrode<T>> = self.electrodes.iter().filter(|e| e.role == Role::Dc).collect();
        let set: Vec<&Electrode<T>> = if dc.is_empty() { self.electrodes.iter().collect() } else { dc };
        let mut b = set[0].extent;
        for e in &set[1..] {
            b.x_min = b.x_min.min(e.extent.x_min);
            b.x_max = b.x_max.max(e.extent.x_max);
            b.y_min = b.y_min.min(e.extent.y_min);
            b.y_max = b.y_max.max(e.extent.y_max);
        }
        let half = T::of(0.5);
        [(b.x_min + b.x_max) * half, (b.y_min + b.y_max) * half]
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let layout: Self = toml::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        layout.validate()?;
        Ok(layout)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml_string()?)?;
        Ok(())
    }
}

/// Reads and validates a layout file.
pub fn load_layout<T: Real>(path: &Path) -> Result<ElectrodeLayout<T>> {
    let text = std::fs::read_to_string(path)?;
    ElectrodeLayout::from_toml_str(&text)
}
