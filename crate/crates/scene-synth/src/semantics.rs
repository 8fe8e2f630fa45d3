//! Semantic validation of candidate support surfaces against a precomputed
//! label map, and derivation of the final placement-region mask.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::SupportSurface;
use crate::raster::{LabelMap, Mask};

#[derive(Debug, Error)]
pub enum SemanticsError {
    #[error("frame has no label map but semantic validation is required")]
    LabelMapMissing,
    #[error("unknown semantic class '{0}'")]
    UnknownClass(String),
}

/// NYUD40 name table, shipped as a versioned text resource.
static NYUD40: OnceLock<Vec<(u16, &'static str)>> = OnceLock::new();

fn nyud40_table() -> &'static [(u16, &'static str)] {
    NYUD40.get_or_init(|| {
        include_str!("nyud40.txt")
            .lines()
            .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
            .map(|l| {
                let (id, name) = l.split_once(' ').expect("nyud40.txt line format");
                (id.parse::<u16>().expect("nyud40.txt id"), name.trim())
            })
            .collect()
    })
}

/// Resolve a NYUD40 class name to its id.
pub fn class_id(name: &str) -> Option<u16> {
    nyud40_table()
        .iter()
        .find(|(_, n)| *n == name)
        .map(|(id, _)| *id)
}

/// Resolve a NYUD40 class id to its name.
pub fn class_name(id: u16) -> Option<&'static str> {
    nyud40_table()
        .iter()
        .find(|(i, _)| *i == id)
        .map(|(_, n)| *n)
}

/// Which NYUD40 classes validate a support surface, and how much of the
/// surface must overlap them.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct SemanticConfig {
    #[serde(
        serialize_with = "serialize_classes",
        deserialize_with = "deserialize_classes"
    )]
    pub valid_class_ids: BTreeSet<u16>,
    pub min_overlap_frac: f64,
}

impl Default for SemanticConfig {
    fn default() -> Self {
        let ids = ["counter", "table", "desk"]
            .iter()
            .map(|n| class_id(n).expect("default class"))
            .collect();
        Self {
            valid_class_ids: ids,
            min_overlap_frac: 0.05,
        }
    }
}

impl SemanticConfig {
    pub fn from_class_names(names: &[&str], min_overlap_frac: f64) -> Result<Self, SemanticsError> {
        let mut ids = BTreeSet::new();
        for name in names {
            ids.insert(class_id(name).ok_or_else(|| SemanticsError::UnknownClass(name.to_string()))?);
        }
        Ok(Self {
            valid_class_ids: ids,
            min_overlap_frac,
        })
    }
}

fn serialize_classes<S>(ids: &BTreeSet<u16>, ser: S) -> Result<S::Ok, S::Error>
where
    S: serde::Serializer,
{
    use serde::ser::SerializeSeq;
    let mut seq = ser.serialize_seq(Some(ids.len()))?;
    for id in ids {
        match class_name(*id) {
            Some(name) => seq.serialize_element(name)?,
            None => seq.serialize_element(id)?,
        }
    }
    seq.end()
}

/// Class lists accept NYUD40 names or raw ids.
fn deserialize_classes<'de, D>(de: D) -> Result<BTreeSet<u16>, D::Error>
where
    D: serde::Deserializer<'de>,
{
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum NameOrId {
        Id(u16),
        Name(String),
    }
    let raw: Vec<NameOrId> = Vec::deserialize(de)?;
    let mut ids = BTreeSet::new();
    for entry in raw {
        match entry {
            NameOrId::Id(id) => {
                ids.insert(id);
            }
            NameOrId::Name(name) => {
                let id = class_id(&name).ok_or_else(|| {
                    serde::de::Error::custom(format!("unknown semantic class '{name}'"))
                })?;
                ids.insert(id);
            }
        }
    }
    Ok(ids)
}

/// Set `semantic_valid` on each surface: true iff the fraction of its
/// support pixels labeled with a valid class reaches `min_overlap_frac`.
/// Geometry fields are left untouched.
pub fn validate_surfaces(
    mut surfaces: Vec<SupportSurface>,
    labels: Option<&LabelMap>,
    cfg: &SemanticConfig,
) -> Result<Vec<SupportSurface>, SemanticsError> {
    let labels = labels.ok_or(SemanticsError::LabelMapMissing)?;
    for surface in &mut surfaces {
        let mask = &surface.support_mask;
        let mut overlap = 0usize;
        for (x, y) in mask.set_pixels() {
            if cfg.valid_class_ids.contains(&labels.get(x, y)) {
                overlap += 1;
            }
        }
        surface.semantic_valid = surface.extent_px > 0
            && overlap as f64 / surface.extent_px as f64 >= cfg.min_overlap_frac;
    }
    Ok(surfaces)
}

/// Union of the semantically valid support masks, eroded by `margin_px` so
/// object footprints stay on-surface. Empty when no surface is valid.
pub fn placement_region(
    surfaces: &[SupportSurface],
    width: u32,
    height: u32,
    margin_px: u32,
) -> Mask {
    let mut union = Mask::new(width, height);
    for surface in surfaces.iter().filter(|s| s.semantic_valid) {
        union = union.union(&surface.support_mask);
    }
    union.erode(margin_px)
}
