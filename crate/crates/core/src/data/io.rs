use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Label, Trajectory, TrajectoryDataset};
use crate::error::{Error, Result};

/// On-disk dataset formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileFormat {
    /// One JSON object per line: `{"id": .., "label": .., "points": [[..], ..]}`.
    Jsonl,
    /// Header `traj_id,seq,x1,..,xd[,label]`, one row per point.
    CsvLong,
}

impl FileFormat {
    /// Guesses the format from a file extension, defaulting to JSONL.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => FileFormat::CsvLong,
            _ => FileFormat::Jsonl,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct JsonRecord {
    id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<Label>,
    points: Vec<Vec<f64>>,
}

pub fn load_dataset(path: impl AsRef<Path>, format: FileFormat) -> Result<TrajectoryDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    match format {
        FileFormat::Jsonl => read_jsonl(BufReader::new(file)),
        FileFormat::CsvLong => read_csv_long(file),
    }
}

pub fn save_dataset(
    ds: &TrajectoryDataset,
    path: impl AsRef<Path>,
    format: FileFormat,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    match format {
        FileFormat::Jsonl => write_jsonl(ds, &mut w),
        FileFormat::CsvLong => write_csv_long(ds, &mut w),
    }
    .and_then(|()| w.flush().map_err(|e| Error::io(path, e)))
}

pub(crate) fn read_jsonl<R: BufRead>(reader: R) -> Result<TrajectoryDataset> {
    let mut trajectories = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: JsonRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        let traj = Trajectory::from_points(rec.id, rec.label, &rec.points).map_err(|e| match e {
            Error::DimensionMismatch { .. } => e,
            other => Error::Parse {
                line: lineno,
                message: other.to_string(),
            },
        })?;
        trajectories.push(traj);
    }
    if trajectories.is_empty() {
        return Err(Error::Empty("file contains no trajectories".into()));
    }
    TrajectoryDataset::new(trajectories)
}

pub(crate) fn write_jsonl<W: Write>(ds: &TrajectoryDataset, w: &mut W) -> Result<()> {
    for t in ds {
        let rec = JsonRecord {
            id: t.id().to_string(),
            label: t.label(),
            points: t.points().map(<[f64]>::to_vec).collect(),
        };
        serde_json::to_writer(&mut *w, &rec).map_err(|e| Error::Format(e.to_string()))?;
        w.write_all(b"\n").map_err(|e| Error::io("<output>", e))?;
    }
    Ok(())
}

struct PendingTrajectory {
    label: Option<Label>,
    rows: Vec<(i64, Vec<f64>)>,
}

pub(crate) fn read_csv_long<R: Read>(reader: R) -> Result<TrajectoryDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| csv_error(e, 1))?
        .iter()
        .map(str::to_string)
        .collect::<Vec<_>>();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(Error::Empty("file contains no header".into()));
    }
    if header.len() < 3 || header[0] != "traj_id" || header[1] != "seq" {
        return Err(Error::Parse {
            line: 1,
            message: "expected header traj_id,seq,x1,...,xd[,label]".into(),
        });
    }
    let has_label = header.last().is_some_and(|h| h == "label");
    let dims = header.len() - 2 - usize::from(has_label);
    if dims == 0 {
        return Err(Error::Parse {
            line: 1,
            message: "no coordinate columns".into(),
        });
    }

    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, PendingTrajectory> = HashMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(e, 0))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let parse_err = |message: String| Error::Parse { line, message };
        let id = record[0].to_string();
        let seq: i64 = record[1]
            .parse()
            .map_err(|_| parse_err(format!("bad seq `{}`", &record[1])))?;
        let coords = (0..dims)
            .map(|j| {
                record[2 + j]
                    .parse::<f64>()
                    .map_err(|_| parse_err(format!("bad coordinate `{}`", &record[2 + j])))
            })
            .collect::<Result<Vec<_>>>()?;
        let label = if has_label && !record[2 + dims].is_empty() {
            Some(
                record[2 + dims]
                    .parse::<Label>()
                    .map_err(|_| parse_err(format!("bad label `{}`", &record[2 + dims])))?,
            )
        } else {
            None
        };
        let entry = groups.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            PendingTrajectory {
                label,
                rows: Vec::new(),
            }
        });
        if entry.label != label {
            return Err(parse_err(format!("inconsistent label for trajectory `{id}`")));
        }
        entry.rows.push((seq, coords));
    }
    if order.is_empty() {
        return Err(Error::Empty("file contains no rows".into()));
    }

    let mut trajectories = Vec::with_capacity(order.len());
    for id in order {
        let mut pending = groups.remove(&id).expect("grouped id");
        pending.rows.sort_by_key(|(seq, _)| *seq);
        if pending.rows.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::Parse {
                line: 0,
                message: format!("duplicate seq in trajectory `{id}`"),
            });
        }
        let coords = pending.rows.into_iter().flat_map(|(_, c)| c).collect();
        trajectories.push(Trajectory::new(id, pending.label, dims, coords)?);
    }
    TrajectoryDataset::new(trajectories)
}

fn csv_error(e: csv::Error, fallback_line: usize) -> Error {
    let line = e
        .position()
        .map_or(fallback_line, |p| p.line() as usize);
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

pub(crate) fn write_csv_long<W: Write>(ds: &TrajectoryDataset, w: &mut W) -> Result<()> {
    let has_label = ds.iter().any(|t| t.label().is_some());
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["traj_id".to_string(), "seq".to_string()];
    header.extend((1..=ds.dims()).map(|j| format!("x{j}")));
    if has_label {
        header.push("label".into());
    }
    let to_err = |e: csv::Error| Error::Format(e.to_string());
    wtr.write_record(&header).map_err(to_err)?;
    for t in ds {
        for (seq, p) in t.points().enumerate() {
            let mut row = vec![t.id().to_string(), seq.to_string()];
            row.extend(p.iter().map(f64::to_string));
            if has_label {
                row.push(t.label().map(|l| l.to_string()).unwrap_or_default());
            }
            wtr.write_record(&row).map_err(to_err)?;
        }
    }
    wtr.flush().map_err(|e| Error::io("<output>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn jsonl_single_line() {
        let ds = read_jsonl(r#"{"id":"a","label":0,"points":[[0,0],[1,1]]}"#.as_bytes()).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.dims(), 2);
        assert_eq!(ds.get(0).len(), 2);
        assert_eq!(ds.get(0).label(), Some(0));
        assert_eq!(ds.get(0).point(1), &[1.0, 1.0]);
    }

    #[test]
    fn jsonl_errors() {
        let mixed = "{\"id\":\"a\",\"points\":[[0,0]]}\n{\"id\":\"b\",\"points\":[[0,0,0]]}\n";
        assert!(matches!(
            read_jsonl(mixed.as_bytes()),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(read_jsonl("".as_bytes()), Err(Error::Empty(_))));
        let bad = "{\"id\":\"a\",\"points\":[[0,0]]}\n{oops\n";
        match read_jsonl(bad.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn csv_long_grouping() {
        let text = "traj_id,seq,x1,x2\na,1,1.0,1.0\nb,0,5.0,5.0\na,0,0.0,0.0\n";
        let ds = read_csv_long(text.as_bytes()).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.get(0).id(), "a");
        assert_eq!(ds.get(0).len(), 2);
        assert_eq!(ds.get(0).point(0), &[0.0, 0.0]);
        assert_eq!(ds.get(1).len(), 1);
        assert_eq!(ds.labels(), None);
    }

    #[test]
    fn csv_long_labels_and_errors() {
        let text = "traj_id,seq,x1,label\na,0,1.0,3\na,1,2.0,3\n";
        let ds = read_csv_long(text.as_bytes()).unwrap();
        assert_eq!(ds.labels(), Some(vec![3]));
        let inconsistent = "traj_id,seq,x1,label\na,0,1.0,3\na,1,2.0,4\n";
        assert!(matches!(
            read_csv_long(inconsistent.as_bytes()),
            Err(Error::Parse { line: 3, .. })
        ));
        assert!(matches!(read_csv_long("".as_bytes()), Err(Error::Empty(_))));
        assert!(matches!(
            read_csv_long("traj_id,seq,x1\n".as_bytes()),
            Err(Error::Empty(_))
        ));
    }

    fn dataset_strategy() -> impl Strategy<Value = TrajectoryDataset> {
        (1usize..4).prop_flat_map(|dims| {
            prop::collection::vec(
                (
                    prop::option::of(-5i64..5),
                    prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::ZERO, dims..dims * 6),
                ),
                1..6,
            )
            .prop_map(move |rows| {
                let trajs = rows
                    .into_iter()
                    .enumerate()
                    .map(|(i, (label, mut coords))| {
                        coords.truncate(coords.len() / dims * dims);
                        Trajectory::new(format!("t{i}"), label, dims, coords).unwrap()
                    })
                    .collect();
                TrajectoryDataset::new(trajs).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn jsonl_round_trip_is_bit_exact(ds in dataset_strategy()) {
            let mut buf = Vec::new();
            write_jsonl(&ds, &mut buf).unwrap();
            let back = read_jsonl(buf.as_slice()).unwrap();
            prop_assert_eq!(back, ds);
        }

        #[test]
        fn csv_round_trip_is_bit_exact(ds in dataset_strategy()) {
            let mut buf = Vec::new();
            write_csv_long(&ds, &mut buf).unwrap();
            let back = read_csv_long(buf.as_slice()).unwrap();
            prop_assert_eq!(back, ds);
        }
    }
}
