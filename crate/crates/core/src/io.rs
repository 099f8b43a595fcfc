//! Edge-list and attribute CSV files.
//!
//! Edges: header `src,dst`, one directed link per row. Attributes: header
//! `agent_id,x_value,a_value`, one agent per row; `a_value` may be empty for
//! observed data. Edge endpoints refer to `agent_id` values and agents are
//! indexed in attribute-file order.

use std::collections::HashMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Network, Population, TypeSpace};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeRow {
    pub src: u64,
    pub dst: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributeRow {
    pub agent_id: u64,
    pub x_value: f64,
    pub a_value: Option<f64>,
}

pub fn write_edges<W: Write>(network: &Network, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["src", "dst"])?;
    for (i, j) in network.edges() {
        w.write_record([i.to_string(), j.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_attributes<W: Write>(population: &Population, type_space: &TypeSpace, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["agent_id", "x_value", "a_value"])?;
    for (i, (&t, &a)) in population.types.iter().zip(&population.fixed_effects).enumerate() {
        w.write_record([i.to_string(), type_space.support[t].to_string(), a.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn expect_header<R: Read>(r: &mut csv::Reader<R>, expected: &[&str], what: &str) -> Result<()> {
    let header = r.headers()?;
    if header.iter().ne(expected.iter().copied()) {
        return Err(Error::InvalidInput(format!(
            "{what} header must be `{}`, found `{}`",
            expected.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    Ok(())
}

pub fn read_edges<R: Read>(input: R) -> Result<Vec<EdgeRow>> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    expect_header(&mut r, &["src", "dst"], "edge file")?;
    r.deserialize()
        .enumerate()
        .map(|(k, row)| row.map_err(|e| Error::InvalidInput(format!("edge file row {}: {e}", k + 2))))
        .collect()
}

pub fn read_attributes<R: Read>(input: R) -> Result<Vec<AttributeRow>> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    expect_header(&mut r, &["agent_id", "x_value", "a_value"], "attribute file")?;
    r.deserialize()
        .enumerate()
        .map(|(k, row)| row.map_err(|e| Error::InvalidInput(format!("attribute file row {}: {e}", k + 2))))
        .collect()
}

/// Observed data in estimator form.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub agent_ids: Vec<u64>,
    pub types: Vec<usize>,
    pub fixed_effects: Option<Vec<f64>>,
    pub network: Network,
}

/// Maps ids to indices, covariate values to types, and checks that every
/// edge endpoint is a known agent.
pub fn assemble(edges: &[EdgeRow], attributes: &[AttributeRow], type_space: &TypeSpace) -> Result<Dataset> {
    let mut index = HashMap::with_capacity(attributes.len());
    let mut types = Vec::with_capacity(attributes.len());
    for (k, row) in attributes.iter().enumerate() {
        if index.insert(row.agent_id, k).is_some() {
            return Err(Error::InvalidInput(format!("duplicate agent_id {}", row.agent_id)));
        }
        let t = type_space.type_of(row.x_value).ok_or_else(|| {
            Error::InvalidInput(format!(
                "agent {} has x_value {} outside the type support {:?}",
                row.agent_id, row.x_value, type_space.support
            ))
        })?;
        types.push(t);
    }
    let lookup = |id: u64| {
        index
            .get(&id)
            .copied()
            .ok_or_else(|| Error::InvalidInput(format!("edge endpoint {id} is not in the attribute file")))
    };
    let pairs = edges
        .iter()
        .map(|e| Ok((lookup(e.src)?, lookup(e.dst)?)))
        .collect::<Result<Vec<_>>>()?;
    let network = Network::from_edges(attributes.len(), pairs)?;
    let fixed_effects = attributes.iter().map(|r| r.a_value).collect::<Option<Vec<_>>>();
    Ok(Dataset {
        agent_ids: attributes.iter().map(|r| r.agent_id).collect(),
        types,
        fixed_effects,
        network,
    })
}
