//! Directory format:
//!
//! * `meta.json`: node types with counts, relation triples, target type,
//!   `num_classes`, `label_mode` (`"single"` or `"multi"`)
//! * `edges_<relation>.tsv`: `src<TAB>dst`, one edge per line
//! * `features_<type>.bin` (optional): `u64 rows`, `u64 cols`, then
//!   `rows × cols` f32, all little-endian
//! * `labels.tsv`: `node<TAB>class` or `node<TAB>0,1,0,...`
//! * `splits.tsv`: `node<TAB>train|val|test`

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    FeatureMatrix, GraphError, GraphParts, HetGraph, LabelMode, Labels, RelationType, Split,
    Splits,
};

#[derive(Serialize, Deserialize)]
struct MetaNodeType {
    name: String,
    count: usize,
}

#[derive(Serialize, Deserialize)]
struct MetaRelation {
    name: String,
    src: String,
    dst: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    reverse_of: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    node_types: Vec<MetaNodeType>,
    relations: Vec<MetaRelation>,
    target_type: String,
    num_classes: usize,
    label_mode: String,
}

fn read_required(path: PathBuf) -> Result<String, GraphError> {
    if !path.is_file() {
        return Err(GraphError::MissingFile(path));
    }
    Ok(fs::read_to_string(path)?)
}

fn parse_err(file: &Path, line: usize, msg: impl Into<String>) -> GraphError {
    GraphError::Parse {
        file: file.display().to_string(),
        line,
        msg: msg.into(),
    }
}

/// Yields `(line number, tab-separated fields)` for non-empty lines.
fn tsv_rows(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r').split('\t').collect()))
}

fn parse_index(file: &Path, line: usize, s: &str) -> Result<usize, GraphError> {
    s.trim()
        .parse::<usize>()
        .map_err(|_| parse_err(file, line, format!("expected a node index, got {s:?}")))
}

pub fn load_graph(dir: &Path) -> Result<HetGraph, GraphError> {
    if !dir.is_dir() {
        return Err(GraphError::MissingFile(dir.to_path_buf()));
    }
    let meta_path = dir.join("meta.json");
    let meta: Meta = serde_json::from_str(&read_required(meta_path.clone())?)
        .map_err(|e| parse_err(&meta_path, e.line(), e.to_string()))?;

    let node_types: Vec<String> = meta.node_types.iter().map(|t| t.name.clone()).collect();
    let node_counts: Vec<usize> = meta.node_types.iter().map(|t| t.count).collect();
    let type_of = |name: &str| {
        node_types
            .iter()
            .position(|t| t == name)
            .ok_or_else(|| GraphError::SchemaMismatch(format!("unknown node type {name:?}")))
    };
    let mut relations = Vec::with_capacity(meta.relations.len());
    for r in &meta.relations {
        relations.push(RelationType {
            name: r.name.clone(),
            src: type_of(&r.src)?,
            dst: type_of(&r.dst)?,
            reverse_of: None,
        });
    }
    for (i, r) in meta.relations.iter().enumerate() {
        if let Some(fwd) = &r.reverse_of {
            let idx = meta.relations.iter().position(|x| &x.name == fwd).ok_or_else(|| {
                GraphError::SchemaMismatch(format!(
                    "relation {} reverses unknown relation {fwd:?}",
                    r.name
                ))
            })?;
            relations[i].reverse_of = Some(idx);
        }
    }
    let target_type = type_of(&meta.target_type)?;
    let mode = match meta.label_mode.as_str() {
        "single" => LabelMode::Single,
        "multi" => LabelMode::Multi,
        other => {
            return Err(GraphError::SchemaMismatch(format!("label_mode {other:?}")));
        }
    };

    let mut edges = Vec::with_capacity(relations.len());
    for r in &relations {
        let path = dir.join(format!("edges_{}.tsv", r.name));
        let text = read_required(path.clone())?;
        let mut list = Vec::new();
        for (line, fields) in tsv_rows(&text) {
            if fields.len() != 2 {
                return Err(parse_err(&path, line, "expected two columns"));
            }
            list.push((
                parse_index(&path, line, fields[0])?,
                parse_index(&path, line, fields[1])?,
            ));
        }
        edges.push(list);
    }

    let mut features = Vec::with_capacity(node_types.len());
    for t in &node_types {
        let path = dir.join(format!("features_{t}.bin"));
        features.push(if path.is_file() {
            Some(read_features(&path)?)
        } else {
            None
        });
    }

    let n_target = node_counts[target_type];
    let labels_path = dir.join("labels.tsv");
    let labels_text = read_required(labels_path.clone())?;
    let mut labels = match mode {
        LabelMode::Single => Labels::Single(vec![None; n_target]),
        LabelMode::Multi => Labels::Multi(vec![None; n_target]),
    };
    for (line, fields) in tsv_rows(&labels_text) {
        if fields.len() != 2 {
            return Err(parse_err(&labels_path, line, "expected two columns"));
        }
        let v = parse_index(&labels_path, line, fields[0])?;
        if v >= n_target {
            return Err(GraphError::IndexOutOfRange(format!(
                "label for node {v} but only {n_target} target nodes"
            )));
        }
        match &mut labels {
            Labels::Single(l) => {
                l[v] = Some(parse_index(&labels_path, line, fields[1])?);
            }
            Labels::Multi(l) => {
                let bits = fields[1]
                    .split(',')
                    .map(|b| match b.trim() {
                        "0" => Ok(false),
                        "1" => Ok(true),
                        other => Err(parse_err(
                            &labels_path,
                            line,
                            format!("multi-label entries must be 0 or 1, got {other:?}"),
                        )),
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                l[v] = Some(bits);
            }
        }
    }

    let splits_path = dir.join("splits.tsv");
    let splits_text = read_required(splits_path.clone())?;
    let mut splits = Splits::default();
    for (line, fields) in tsv_rows(&splits_text) {
        if fields.len() != 2 {
            return Err(parse_err(&splits_path, line, "expected two columns"));
        }
        let v = parse_index(&splits_path, line, fields[0])?;
        match fields[1].trim() {
            "train" => splits.train.push(v),
            "val" => splits.val.push(v),
            "test" => splits.test.push(v),
            other => return Err(parse_err(&splits_path, line, format!("unknown split {other:?}"))),
        }
    }

    HetGraph::new(GraphParts {
        node_types,
        node_counts,
        relations,
        edges,
        features,
        target_type,
        num_classes: meta.num_classes,
        labels,
        splits,
    })
}

fn read_features(path: &Path) -> Result<FeatureMatrix, GraphError> {
    let bytes = fs::read(path)?;
    if bytes.len() < 16 {
        return Err(parse_err(path, 0, "truncated header"));
    }
    let rows = u64::from_le_bytes(bytes[0..8].try_into().expect("8 bytes")) as usize;
    let cols = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let payload = &bytes[16..];
    if rows.checked_mul(cols).and_then(|n| n.checked_mul(4)) != Some(payload.len()) {
        return Err(parse_err(
            path,
            0,
            format!("{rows}x{cols} header but {} payload bytes", payload.len()),
        ));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    FeatureMatrix::new(rows, cols, data)
}

pub fn save_graph(g: &HetGraph, dir: &Path) -> Result<(), GraphError> {
    let p = g.parts();
    fs::create_dir_all(dir)?;
    let meta = Meta {
        node_types: p
            .node_types
            .iter()
            .zip(&p.node_counts)
            .map(|(n, &c)| MetaNodeType {
                name: n.clone(),
                count: c,
            })
            .collect(),
        relations: p
            .relations
            .iter()
            .map(|r| MetaRelation {
                name: r.name.clone(),
                src: p.node_types[r.src].clone(),
                dst: p.node_types[r.dst].clone(),
                reverse_of: r.reverse_of.map(|i| p.relations[i].name.clone()),
            })
            .collect(),
        target_type: p.node_types[p.target_type].clone(),
        num_classes: p.num_classes,
        label_mode: match p.labels.mode() {
            LabelMode::Single => "single".into(),
            LabelMode::Multi => "multi".into(),
        },
    };
    let json = serde_json::to_string_pretty(&meta).map_err(std::io::Error::from)?;
    fs::write(dir.join("meta.json"), json + "\n")?;

    for (r, list) in p.relations.iter().zip(&p.edges) {
        let mut w = BufWriter::new(fs::File::create(dir.join(format!("edges_{}.tsv", r.name)))?);
        for (s, d) in list {
            writeln!(w, "{s}\t{d}")?;
        }
        w.flush()?;
    }

    for (t, feat) in p.node_types.iter().zip(&p.features) {
        let path = dir.join(format!("features_{t}.bin"));
        match feat {
            Some(f) => {
                let mut w = BufWriter::new(fs::File::create(path)?);
                w.write_all(&(f.rows as u64).to_le_bytes())?;
                w.write_all(&(f.cols as u64).to_le_bytes())?;
                for v in &f.data {
                    w.write_all(&v.to_le_bytes())?;
                }
                w.flush()?;
            }
            None if path.exists() => fs::remove_file(path)?,
            None => {}
        }
    }

    let mut w = BufWriter::new(fs::File::create(dir.join("labels.tsv"))?);
    match &p.labels {
        Labels::Single(l) => {
            for (v, y) in l.iter().enumerate() {
                if let Some(y) = y {
                    writeln!(w, "{v}\t{y}")?;
                }
            }
        }
        Labels::Multi(l) => {
            for (v, y) in l.iter().enumerate() {
                if let Some(y) = y {
                    let bits: Vec<&str> = y.iter().map(|&b| if b { "1" } else { "0" }).collect();
                    writeln!(w, "{v}\t{}", bits.join(","))?;
                }
            }
        }
    }
    w.flush()?;

    let mut w = BufWriter::new(fs::File::create(dir.join("splits.tsv"))?);
    for s in [Split::Train, Split::Val, Split::Test] {
        for v in p.splits.get(s) {
            writeln!(w, "{v}\t{}", s.name())?;
        }
    }
    w.flush()?;
    Ok(())
}
