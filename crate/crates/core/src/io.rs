//! CSV and JSON import/export.
//!
//! Writers take any `io::Write`, so callers choose between files and buffers.
//! Floats in CSV are written with 17 significant digits.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::cell_complex::{GluingTable, LevelGraph};
use crate::error::{Error, Result};
use crate::geometry::EmbeddedLevel;
use crate::spectrum::SpectralReport;

fn sci(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Serialize)]
struct VertexRow {
    id: usize,
    address: String,
}

#[derive(Serialize)]
struct EdgeRow {
    id_a: usize,
    id_b: usize,
    word: String,
}

#[derive(Serialize)]
struct CellRow {
    word: String,
    ids: String,
}

#[derive(Serialize)]
struct CoordRow {
    id: usize,
    re: String,
    im: String,
}

#[derive(Serialize, Deserialize)]
struct ValueRow {
    id: usize,
    value: String,
}

#[derive(Serialize)]
struct EigenRow<'a> {
    level: usize,
    kind: &'a str,
    index: usize,
    eigenvalue: String,
    map_residual: String,
    spectrum_distance: String,
}

/// `id,address` with the canonical (lexicographically smallest) address.
pub fn write_vertices<W: Write>(graph: &LevelGraph, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for id in 0..graph.vertex_count() {
        w.serialize(VertexRow {
            id,
            address: graph.format_address(graph.canonical_address(id)),
        })?;
    }
    w.flush()?;
    Ok(())
}

/// `id_a,id_b,word` where `word` is the cell the edge came from.
pub fn write_edges<W: Write>(graph: &LevelGraph, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for e in &graph.edges {
        w.serialize(EdgeRow {
            id_a: e.a,
            id_b: e.b,
            word: graph.format_word(e.word),
        })?;
    }
    w.flush()?;
    Ok(())
}

/// `word,ids` with vertex ids separated by spaces.
pub fn write_cells<W: Write>(graph: &LevelGraph, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for c in &graph.cells {
        let ids: Vec<String> = c.vertices.iter().map(|v| v.to_string()).collect();
        w.serialize(CellRow {
            word: graph.format_word(c.word),
            ids: ids.join(" "),
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_coords<W: Write>(level: &EmbeddedLevel, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for (id, z) in level.coords.iter().enumerate() {
        w.serialize(CoordRow {
            id,
            re: sci(z.re),
            im: sci(z.im),
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_function<W: Write>(values: &[f64], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for (id, &v) in values.iter().enumerate() {
        w.serialize(ValueRow { id, value: sci(v) })?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `id,value` rows; every id in `0..len` must appear exactly once.
pub fn read_function<R: Read>(input: R) -> Result<Vec<f64>> {
    let mut r = csv::Reader::from_reader(input);
    let mut rows = Vec::new();
    for row in r.deserialize() {
        let row: ValueRow = row?;
        let v: f64 =
            row.value.trim().parse().map_err(|_| {
                Error::domain(format!("bad value {:?} for id {}", row.value, row.id))
            })?;
        rows.push((row.id, v));
    }
    let mut out = vec![f64::NAN; rows.len()];
    for (id, v) in rows {
        let slot = out
            .get_mut(id)
            .ok_or_else(|| Error::domain(format!("id {id} out of range")))?;
        if !slot.is_nan() {
            return Err(Error::domain(format!("id {id} appears twice")));
        }
        *slot = v;
    }
    Ok(out)
}

/// Appends the rows of `reports` to one eigenvalue table.
pub fn write_eigenvalues<W: Write>(reports: &[SpectralReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for rep in reports {
        let kind = rep.kind.to_string();
        for (index, &eigenvalue) in rep.eigenvalues.iter().enumerate() {
            let opt = |v: &[f64]| v.get(index).map(|&x| sci(x)).unwrap_or_default();
            w.serialize(EigenRow {
                level: rep.level,
                kind: &kind,
                index,
                eigenvalue: sci(eigenvalue),
                map_residual: opt(&rep.map_residuals),
                spectrum_distance: opt(&rep.spectrum_distances),
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn table_to_json(table: &GluingTable) -> Result<String> {
    Ok(serde_json::to_string_pretty(table)?)
}

pub fn table_from_json(s: &str) -> Result<GluingTable> {
    let table: GluingTable = serde_json::from_str(s)?;
    table.validate()?;
    Ok(table)
}

pub fn write_json<T: Serialize, W: Write>(value: &T, out: W) -> Result<()> {
    serde_json::to_writer_pretty(out, value)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell_complex::build_level;

    fn text(buf: Vec<u8>) -> String {
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn level_one_tables() {
        let g = build_level(&GluingTable::sg_dynamical_gluing(), 1).unwrap();
        let mut buf = Vec::new();
        write_vertices(&g, &mut buf).unwrap();
        let s = text(buf);
        assert!(s.starts_with("id,address\n0,0.0\n"));
        assert_eq!(s.lines().count(), 7);

        let mut buf = Vec::new();
        write_edges(&g, &mut buf).unwrap();
        let s = text(buf);
        assert!(s.starts_with("id_a,id_b,word\n"));
        assert_eq!(s.lines().count(), 10);

        let mut buf = Vec::new();
        write_cells(&g, &mut buf).unwrap();
        assert_eq!(text(buf).lines().count(), 4);
    }

    #[test]
    fn function_roundtrip() {
        let u = vec![0.1, -2.5e-300, 1.0 / 3.0, 7.0];
        let mut buf = Vec::new();
        write_function(&u, &mut buf).unwrap();
        assert_eq!(read_function(buf.as_slice()).unwrap(), u);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let csv = "id,value\n0,1.0\n0,2.0\n";
        assert!(read_function(csv.as_bytes()).is_err());
    }

    #[test]
    fn table_json_roundtrip() {
        let t = GluingTable::sg_dynamical_gluing();
        let s = table_to_json(&t).unwrap();
        assert!(s.contains("\"glue_pairs\""));
        assert_eq!(table_from_json(&s).unwrap(), t);
    }
}
