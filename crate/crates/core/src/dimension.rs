//! The five scoring dimensions and fixed-shape per-dimension value maps.

use std::fmt;
use std::ops::{Index, IndexMut};
use std::str::FromStr;

use serde::de::{self, Deserializer, MapAccess, Visitor};
use serde::ser::{SerializeMap, Serializer};
use serde::{Deserialize, Serialize};

/// Scoring dimension. Declaration order is the serialization order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DimensionKey {
    /// Reliability & determinism.
    R,
    /// Semantic integrity & resilience.
    S,
    /// Compliance, safety & alignment.
    C,
    /// Governance & asset traceability.
    G,
    /// Operational efficiency & cost.
    O,
}

impl DimensionKey {
    pub const ALL: [DimensionKey; 5] = [Self::R, Self::S, Self::C, Self::G, Self::O];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::R => "R",
            Self::S => "S",
            Self::C => "C",
            Self::G => "G",
            Self::O => "O",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Self::R => "reliability & determinism",
            Self::S => "semantic integrity & resilience",
            Self::C => "compliance, safety & alignment",
            Self::G => "governance & traceability",
            Self::O => "operational efficiency & cost",
        }
    }
}

impl fmt::Display for DimensionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DimensionKey {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "R" => Ok(Self::R),
            "S" => Ok(Self::S),
            "C" => Ok(Self::C),
            "G" => Ok(Self::G),
            "O" => Ok(Self::O),
            other => Err(format!(
                "unknown dimension `{other}` (expected R, S, C, G or O)"
            )),
        }
    }
}

/// One `f64` per dimension, serialized as an object keyed `"R".."O"`.
///
/// Deserialization is strict: all five keys are required and no others are
/// accepted. No range constraint is applied here; see [`ScoreVector`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DimValues(pub [f64; 5]);

impl DimValues {
    pub const ZERO: DimValues = DimValues([0.0; 5]);

    pub fn splat(value: f64) -> Self {
        Self([value; 5])
    }

    pub fn from_fn(mut f: impl FnMut(DimensionKey) -> f64) -> Self {
        Self(DimensionKey::ALL.map(&mut f))
    }

    pub fn get(&self, key: DimensionKey) -> f64 {
        self.0[key.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = (DimensionKey, f64)> + '_ {
        DimensionKey::ALL
            .iter()
            .map(move |&k| (k, self.0[k.index()]))
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }
}

impl Index<DimensionKey> for DimValues {
    type Output = f64;

    fn index(&self, key: DimensionKey) -> &f64 {
        &self.0[key.index()]
    }
}

impl IndexMut<DimensionKey> for DimValues {
    fn index_mut(&mut self, key: DimensionKey) -> &mut f64 {
        &mut self.0[key.index()]
    }
}

impl Serialize for DimValues {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(5))?;
        for (key, value) in self.iter() {
            map.serialize_entry(key.as_str(), &value)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for DimValues {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct DimVisitor;

        impl<'de> Visitor<'de> for DimVisitor {
            type Value = DimValues;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("an object with numeric keys R, S, C, G and O")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> Result<DimValues, A::Error> {
                let mut slots: [Option<f64>; 5] = [None; 5];
                while let Some(name) = access.next_key::<String>()? {
                    let key = DimensionKey::from_str(&name)
                        .map_err(|_| de::Error::unknown_field(&name, &["R", "S", "C", "G", "O"]))?;
                    if slots[key.index()].is_some() {
                        return Err(de::Error::duplicate_field(key.as_str()));
                    }
                    slots[key.index()] = Some(access.next_value()?);
                }
                let mut out = [0.0; 5];
                for key in DimensionKey::ALL {
                    out[key.index()] =
                        slots[key.index()].ok_or_else(|| de::Error::missing_field(key.as_str()))?;
                }
                Ok(DimValues(out))
            }
        }

        deserializer.deserialize_map(DimVisitor)
    }
}

/// Per-dimension scores, each finite and within `[0, 100]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
#[serde(transparent)]
pub struct ScoreVector(DimValues);

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("score for dimension {dimension} is {value}, outside [0, 100]")]
pub struct ScoreRangeError {
    pub dimension: DimensionKey,
    pub value: f64,
}

impl ScoreVector {
    pub const ZERO: ScoreVector = ScoreVector(DimValues::ZERO);

    pub fn new(values: [f64; 5]) -> Result<Self, ScoreRangeError> {
        Self::try_from(DimValues(values))
    }

    pub fn get(&self, key: DimensionKey) -> f64 {
        self.0.get(key)
    }

    pub fn values(&self) -> &DimValues {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = (DimensionKey, f64)> + '_ {
        self.0.iter()
    }

    /// Returns a copy with one component replaced.
    pub fn with(&self, key: DimensionKey, value: f64) -> Result<Self, ScoreRangeError> {
        let mut values = self.0;
        values[key] = value;
        Self::try_from(values)
    }
}

impl TryFrom<DimValues> for ScoreVector {
    type Error = ScoreRangeError;

    fn try_from(values: DimValues) -> Result<Self, Self::Error> {
        for (dimension, value) in values.iter() {
            if !(0.0..=100.0).contains(&value) {
                return Err(ScoreRangeError { dimension, value });
            }
        }
        Ok(Self(values))
    }
}

impl<'de> Deserialize<'de> for ScoreVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let values = DimValues::deserialize(deserializer)?;
        ScoreVector::try_from(values).map_err(de::Error::custom)
    }
}

impl Index<DimensionKey> for ScoreVector {
    type Output = f64;

    fn index(&self, key: DimensionKey) -> &f64 {
        &self.0[key]
    }
}
