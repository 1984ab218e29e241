//! Population file format.
//!
//! ```json
//! {"cells": [{"id": "x1", "mass": "1/4", "group": "A", "p_star": 0.5}],
//!  "predictors": {"z": {"x1": 0.5}},
//!  "grid_alpha": 0.1}
//! ```
//!
//! Numeric fields accept JSON numbers or `"p/q"` strings. Floats are written
//! with 17 significant digits; exact fractions are written as `"p/q"`.

use std::collections::BTreeMap;

use serde::ser::{SerializeMap, SerializeStruct};
use serde::{Serialize, Serializer};
use serde_json::value::RawValue;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::population::{Cell, Group, Population, Predictor};
use crate::scalar::{Literal, Scalar};

/// A population plus the predictors declared alongside it.
#[derive(Clone, Debug, PartialEq)]
pub struct Instance<T> {
    pub population: Population<T>,
    pub predictors: BTreeMap<String, Predictor<T>>,
    pub grid_alpha: Option<f64>,
}

impl<T: Scalar> Instance<T> {
    pub fn new(population: Population<T>, predictors: impl IntoIterator<Item = Predictor<T>>) -> Self {
        Instance {
            population,
            predictors: predictors
                .into_iter()
                .map(|p| (p.name().to_string(), p))
                .collect(),
            grid_alpha: None,
        }
    }

    pub fn predictor(&self, name: &str) -> Result<&Predictor<T>> {
        if name == "p_star" && !self.predictors.contains_key(name) {
            return Err(Error::UnknownPredictor(
                "p_star is available through Population::p_star_predictor".into(),
            ));
        }
        self.predictors
            .get(name)
            .ok_or_else(|| Error::UnknownPredictor(name.to_string()))
    }

    pub fn with_predictor(mut self, predictor: Predictor<T>) -> Self {
        self.predictors.insert(predictor.name().to_string(), predictor);
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&FileView(self)).expect("population serializes")
    }
}

fn parse_err(context: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Parse {
        context: context.into(),
        message: message.into(),
    }
}

fn scalar_field<T: Scalar>(value: Option<&Value>, context: &str) -> Result<T> {
    match value {
        Some(Value::Number(n)) => T::parse_literal(&n.to_string()).map_err(|m| parse_err(context, m)),
        Some(Value::String(s)) => T::parse_literal(s).map_err(|m| parse_err(context, m)),
        Some(other) => Err(parse_err(context, format!("expected number or fraction string, got {other}"))),
        None => Err(parse_err(context, "missing field")),
    }
}

/// Parses and validates a population file.
pub fn load_population<T: Scalar>(source: &str) -> Result<Instance<T>> {
    let root: Value = serde_json::from_str(source)
        .map_err(|e| parse_err(format!("line {} column {}", e.line(), e.column()), e.to_string()))?;
    let obj = root
        .as_object()
        .ok_or_else(|| parse_err("root", "expected a JSON object"))?;

    let raw_cells = obj
        .get("cells")
        .and_then(Value::as_array)
        .ok_or_else(|| parse_err("cells", "expected an array"))?;
    let mut cells = Vec::with_capacity(raw_cells.len());
    for (i, raw) in raw_cells.iter().enumerate() {
        let ctx = |field: &str| format!("cells[{i}].{field}");
        let id = raw
            .get("id")
            .and_then(Value::as_str)
            .ok_or_else(|| parse_err(ctx("id"), "expected a string"))?
            .to_string();
        let group = match raw.get("group").and_then(Value::as_str) {
            Some("A") => Group::A,
            Some("B") => Group::B,
            _ => return Err(parse_err(ctx("group"), "expected \"A\" or \"B\"")),
        };
        let mass = scalar_field(raw.get("mass"), &ctx("mass"))?;
        let p_star = scalar_field(raw.get("p_star"), &ctx("p_star"))?;
        cells.push(Cell {
            id,
            mass,
            group,
            p_star,
        });
    }
    let population = Population::new(cells)?;

    let grid_alpha = match obj.get("grid_alpha") {
        None | Some(Value::Null) => None,
        Some(v) => Some(
            v.as_f64()
                .ok_or_else(|| parse_err("grid_alpha", "expected a number"))?,
        ),
    };

    let mut predictors = BTreeMap::new();
    if let Some(raw) = obj.get("predictors") {
        let raw = raw
            .as_object()
            .ok_or_else(|| parse_err("predictors", "expected an object"))?;
        for (name, scores) in raw {
            let scores = scores
                .as_object()
                .ok_or_else(|| parse_err(format!("predictors.{name}"), "expected an object"))?;
            let mut parsed = Vec::with_capacity(scores.len());
            for (id, score) in scores {
                let value = scalar_field::<T>(Some(score), &format!("predictors.{name}.{id}"))?;
                parsed.push((id.as_str(), value));
            }
            let mut predictor = Predictor::from_map(&population, name.clone(), parsed)?;
            if let Some(alpha) = grid_alpha {
                predictor = predictor.with_grid(&population, alpha)?;
            }
            predictors.insert(name.clone(), predictor);
        }
    }

    Ok(Instance {
        population,
        predictors,
        grid_alpha,
    })
}

struct Lit<'a, T>(&'a T);

impl<T: Scalar> Serialize for Lit<'_, T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self.0.to_literal() {
            Literal::Number(text) => RawValue::from_string(text)
                .map_err(serde::ser::Error::custom)?
                .serialize(serializer),
            Literal::Fraction(text) => serializer.serialize_str(&text),
        }
    }
}

struct CellView<'a, T>(&'a Cell<T>);

impl<T: Scalar> Serialize for CellView<'_, T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut s = serializer.serialize_struct("Cell", 4)?;
        s.serialize_field("id", &self.0.id)?;
        s.serialize_field("mass", &Lit(&self.0.mass))?;
        s.serialize_field("group", &self.0.group)?;
        s.serialize_field("p_star", &Lit(&self.0.p_star))?;
        s.end()
    }
}

struct ScoresView<'a, T>(&'a Population<T>, &'a Predictor<T>);

impl<T: Scalar> Serialize for ScoresView<'_, T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut m = serializer.serialize_map(Some(self.0.len()))?;
        for (cell, score) in self.0.cells().iter().zip(self.1.scores()) {
            m.serialize_entry(&cell.id, &Lit(score))?;
        }
        m.end()
    }
}

struct FileView<'a, T>(&'a Instance<T>);

impl<T: Scalar> Serialize for FileView<'_, T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let inst = self.0;
        let fields = if inst.grid_alpha.is_some() { 3 } else { 2 };
        let mut s = serializer.serialize_struct("Population", fields)?;
        let cells: Vec<_> = inst.population.cells().iter().map(CellView).collect();
        s.serialize_field("cells", &cells)?;
        let predictors: BTreeMap<&str, ScoresView<'_, T>> = inst
            .predictors
            .iter()
            .map(|(k, p)| (k.as_str(), ScoresView(&inst.population, p)))
            .collect();
        s.serialize_field("predictors", &predictors)?;
        if let Some(alpha) = inst.grid_alpha {
            s.serialize_field("grid_alpha", &Lit(&alpha))?;
        }
        s.end()
    }
}
