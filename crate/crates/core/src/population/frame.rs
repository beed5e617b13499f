//! Cluster-frame text format: one row per unit,
//! `cluster_id,stratum,unit_stratum,y1,y0`, rows of a cluster contiguous.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::{Cluster, Population, Unit};
use crate::error::{Error, Result};

const HEADER: [&str; 5] = ["cluster_id", "stratum", "unit_stratum", "y1", "y0"];

pub fn read_frame<R: Read>(reader: R) -> Result<Population> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let headers = rdr.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Frame {
            line: 1,
            message: format!("missing column '{name}'"),
        })
    };
    let [ci, si, ui, y1i, y0i] = [
        col(HEADER[0])?,
        col(HEADER[1])?,
        col(HEADER[2])?,
        col(HEADER[3])?,
        col(HEADER[4])?,
    ];

    let mut clusters: Vec<Cluster> = Vec::new();
    let mut unit_labels: Vec<Vec<Option<String>>> = Vec::new();
    let mut seen = std::collections::HashSet::new();

    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let field = |i: usize, name: &str| -> Result<&str> {
            rec.get(i).ok_or_else(|| Error::Frame {
                line,
                message: format!("missing '{name}' field"),
            })
        };
        let id = field(ci, "cluster_id")?;
        if id.is_empty() {
            return Err(Error::Frame { line, message: "empty cluster_id".into() });
        }
        let stratum = non_empty(field(si, "stratum")?);
        let unit_stratum = non_empty(field(ui, "unit_stratum")?);
        let y1 = parse_outcome(field(y1i, "y1")?, "y1", line)?;
        let y0 = parse_outcome(field(y0i, "y0")?, "y0", line)?;

        let continuing = clusters.last().is_some_and(|c| c.id == id);
        if !continuing {
            if !seen.insert(id.to_string()) {
                return Err(Error::Frame {
                    line,
                    message: format!("rows for cluster '{id}' are not contiguous (duplicate unit indices)"),
                });
            }
            clusters.push(Cluster {
                id: id.to_string(),
                stratum: stratum.clone(),
                units: Vec::new(),
                unit_strata: None,
            });
            unit_labels.push(Vec::new());
        }
        let cluster = clusters.last_mut().expect("pushed above");
        if cluster.stratum != stratum {
            return Err(Error::Frame {
                line,
                message: format!("cluster '{id}' has inconsistent stratum labels"),
            });
        }
        cluster.units.push(Unit { y1, y0 });
        unit_labels.last_mut().expect("pushed above").push(unit_stratum);
    }

    for (cluster, labels) in clusters.iter_mut().zip(unit_labels) {
        let present = labels.iter().filter(|l| l.is_some()).count();
        if present == labels.len() {
            cluster.unit_strata = Some(labels.into_iter().map(Option::unwrap).collect());
        } else if present > 0 {
            return Err(Error::validation(format!(
                "cluster '{}' labels only some units with a unit stratum",
                cluster.id
            )));
        }
    }

    Population::new(clusters)
}

pub fn read_frame_path(path: impl AsRef<Path>) -> Result<Population> {
    read_frame(File::open(path)?)
}

/// Writes floats in shortest round-trip form so `read_frame` reproduces
/// every value bit for bit.
pub fn write_frame<W: Write>(pop: &Population, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(HEADER)?;
    for c in pop.clusters() {
        let stratum = c.stratum.as_deref().unwrap_or("");
        for (k, u) in c.units.iter().enumerate() {
            let us = c.unit_strata.as_ref().map(|l| l[k].as_str()).unwrap_or("");
            w.write_record([
                c.id.as_str(),
                stratum,
                us,
                &format_f64(u.y1),
                &format_f64(u.y0),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_frame_path(pop: &Population, path: impl AsRef<Path>) -> Result<()> {
    write_frame(pop, File::create(path)?)
}

pub(crate) fn format_f64(x: f64) -> String {
    format!("{x:?}")
}

fn non_empty(s: &str) -> Option<String> {
    (!s.is_empty()).then(|| s.to_string())
}

fn parse_outcome(s: &str, name: &str, line: usize) -> Result<f64> {
    if s.is_empty() {
        return Err(Error::Frame { line, message: format!("missing '{name}' value") });
    }
    let v: f64 = s.parse().map_err(|_| Error::Frame {
        line,
        message: format!("'{name}' value '{s}' is not a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Frame { line, message: format!("'{name}' value '{s}' is not finite") });
    }
    Ok(v)
}
