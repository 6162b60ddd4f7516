//! Long-format CSV: one row per observed cell,
//! `patient_id,label,day,attribute,value`, with 1-based days and label in
//! {0, 1, NA}. Missing observations are absent rows.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use super::{Cohort, MtSample, MIN_OBSERVED};
use crate::error::{Error, Result};

pub const HEADER: [&str; 5] = ["patient_id", "label", "day", "attribute", "value"];

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    /// Expected attribute names, in order. Inferred from first appearance when absent.
    pub attributes: Option<Vec<String>>,
    /// Window length in days. Inferred as the largest day present when absent.
    pub window_length: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct LoadedCohort {
    pub cohort: Cohort,
    /// Patients removed for having fewer than two observations.
    pub excluded: usize,
}

pub fn load_cohort(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<LoadedCohort> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_cohort(file, path, opts)
}

struct Patient {
    label: Option<u8>,
    cells: Vec<(usize, usize, f64)>,
}

pub fn read_cohort<R: Read>(reader: R, source: &Path, opts: &LoadOptions) -> Result<LoadedCohort> {
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: PathBuf::from(source),
        line,
        msg,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut attr_index: HashMap<String, usize> = HashMap::new();
    let mut attr_names: Vec<String> = Vec::new();
    if let Some(attrs) = &opts.attributes {
        for (i, a) in attrs.iter().enumerate() {
            attr_index.insert(a.clone(), i);
        }
        attr_names = attrs.clone();
    }

    let mut order: Vec<String> = Vec::new();
    let mut patients: HashMap<String, Patient> = HashMap::new();
    let mut seen: HashSet<(String, usize, usize)> = HashSet::new();
    let mut max_day = 0usize;
    let mut header_seen = false;

    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if !header_seen {
            header_seen = true;
            let fields: Vec<&str> = record.iter().collect();
            if fields != HEADER {
                return Err(parse_err(
                    line,
                    format!("expected header `{}`", HEADER.join(",")),
                ));
            }
            continue;
        }
        if record.len() != 5 {
            return Err(parse_err(
                line,
                format!("expected 5 fields, got {}", record.len()),
            ));
        }
        let id = record[0].to_string();
        if id.is_empty() {
            return Err(parse_err(line, "empty patient_id".into()));
        }
        let label = match &record[1] {
            "0" => Some(0),
            "1" => Some(1),
            "NA" | "" => None,
            other => {
                return Err(parse_err(
                    line,
                    format!("label must be 0, 1 or NA, got `{other}`"),
                ))
            }
        };
        let day: usize = record[2]
            .parse()
            .map_err(|_| parse_err(line, format!("bad day `{}`", &record[2])))?;
        if day == 0 {
            return Err(parse_err(line, "days are 1-based".into()));
        }
        if let Some(w) = opts.window_length {
            if day > w {
                return Err(parse_err(line, format!("day {day} beyond window {w}")));
            }
        }
        let attr = match attr_index.get(&record[3]) {
            Some(&a) => a,
            None if opts.attributes.is_some() => {
                return Err(parse_err(
                    line,
                    format!("unknown attribute `{}`", &record[3]),
                ))
            }
            None => {
                let a = attr_names.len();
                attr_names.push(record[3].to_string());
                attr_index.insert(record[3].to_string(), a);
                a
            }
        };
        let value: f64 = record[4]
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| parse_err(line, format!("bad value `{}`", &record[4])))?;
        if !seen.insert((id.clone(), day, attr)) {
            return Err(parse_err(
                line,
                format!("duplicate observation ({id}, day {day}, {})", &record[3]),
            ));
        }
        max_day = max_day.max(day);
        let patient = patients.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            Patient {
                label,
                cells: Vec::new(),
            }
        });
        if patient.label != label {
            return Err(parse_err(
                line,
                format!("inconsistent label for patient {id}"),
            ));
        }
        patient.cells.push((attr, day - 1, value));
    }

    let window = opts.window_length.unwrap_or(max_day.max(1));
    let n_attrs = attr_names.len();
    let mut samples = Vec::with_capacity(order.len());
    let mut excluded = 0;
    for id in order {
        let p = &patients[&id];
        if p.cells.len() < MIN_OBSERVED {
            excluded += 1;
            continue;
        }
        let mut values = vec![0.0; n_attrs * window];
        let mut mask = vec![false; n_attrs * window];
        for &(a, t, v) in &p.cells {
            values[a * window + t] = v;
            mask[a * window + t] = true;
        }
        samples.push(MtSample::new(id, p.label, n_attrs, window, values, mask)?);
    }
    if excluded > 0 {
        log::warn!("excluded {excluded} patients with fewer than {MIN_OBSERVED} observations");
    }
    Ok(LoadedCohort {
        cohort: Cohort::new(attr_names, window, samples)?,
        excluded,
    })
}

pub fn write_cohort(cohort: &Cohort, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut file = std::io::BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    write_cohort_to(cohort, &mut file).map_err(|e| Error::io(path, e))?;
    file.flush().map_err(|e| Error::io(path, e))
}

/// Rows are emitted per patient, then day, then attribute.
pub fn write_cohort_to<W: Write>(cohort: &Cohort, out: &mut W) -> std::io::Result<()> {
    writeln!(out, "{}", HEADER.join(","))?;
    for s in cohort.samples() {
        let label = match s.label() {
            Some(l) => l.to_string(),
            None => "NA".to_string(),
        };
        for t in 0..s.n_steps() {
            for (a, name) in cohort.attribute_names().iter().enumerate() {
                if let Some(v) = s.get(a, t) {
                    writeln!(out, "{},{},{},{},{}", s.id(), label, t + 1, name, v)?;
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read(text: &str, opts: &LoadOptions) -> Result<LoadedCohort> {
        read_cohort(text.as_bytes(), Path::new("mem.csv"), opts)
    }

    const HDR: &str = "patient_id,label,day,attribute,value\n";

    #[test]
    fn rows_map_to_cells() {
        let text = format!("{HDR}p1,1,3,CRP,40.0\np1,1,5,CRP,90.0\n");
        let opts = LoadOptions {
            window_length: Some(20),
            ..Default::default()
        };
        let loaded = read(&text, &opts).unwrap();
        let c = loaded.cohort;
        assert_eq!(c.len(), 1);
        assert_eq!(c.window_length(), 20);
        let s = &c.samples()[0];
        assert_eq!(s.n_observed(), 2);
        assert_eq!(s.get(0, 2), Some(40.0));
        assert_eq!(s.get(0, 4), Some(90.0));
        assert_eq!(s.label(), Some(1));
    }

    #[test]
    fn single_observation_patients_are_excluded() {
        let text = format!("{HDR}p1,0,1,CRP,1\np1,0,2,CRP,2\np2,1,1,CRP,5\n");
        let loaded = read(&text, &LoadOptions::default()).unwrap();
        assert_eq!(loaded.excluded, 1);
        assert_eq!(loaded.cohort.ids(), vec!["p1"]);
    }

    #[test]
    fn empty_file_is_empty_cohort() {
        let loaded = read("", &LoadOptions::default()).unwrap();
        assert!(loaded.cohort.is_empty());
        let loaded = read(HDR, &LoadOptions::default()).unwrap();
        assert!(loaded.cohort.is_empty());
        assert_eq!(loaded.excluded, 0);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let text = format!("{HDR}p1,0,1,CRP,1\np1,0,x,CRP,2\n");
        match read(&text, &LoadOptions::default()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let text = format!("{HDR}p1,0,1,CRP,1\np1,0,1,CRP,2\n");
        assert!(matches!(
            read(&text, &LoadOptions::default()),
            Err(Error::Parse { line: 3, .. })
        ));
        let opts = LoadOptions {
            attributes: Some(vec!["CRP".into()]),
            window_length: None,
        };
        let text = format!("{HDR}p1,0,1,WBC,1\n");
        assert!(matches!(
            read(&text, &opts),
            Err(Error::Parse { line: 2, .. })
        ));
        let text = format!("{HDR}p1,0,1,CRP\n");
        assert!(read(&text, &LoadOptions::default()).is_err());
        assert!(read("a,b,c,d,e\n", &LoadOptions::default()).is_err());
        let text = format!("{HDR}p1,0,25,CRP,1\n");
        let opts = LoadOptions {
            window_length: Some(20),
            ..Default::default()
        };
        assert!(read(&text, &opts).is_err());
    }

    #[test]
    fn na_labels_and_inconsistent_labels() {
        let text = format!("{HDR}p1,NA,1,CRP,1\np1,NA,2,CRP,2\n");
        let c = read(&text, &LoadOptions::default()).unwrap().cohort;
        assert_eq!(c.samples()[0].label(), None);
        let text = format!("{HDR}p1,0,1,CRP,1\np1,1,2,CRP,2\n");
        assert!(read(&text, &LoadOptions::default()).is_err());
    }

    #[test]
    fn write_then_read_reproduces_rows() {
        let text = format!("{HDR}p1,1,3,CRP,40.5\np1,1,5,CRP,90\np2,0,1,WBC,7.25\np2,0,1,CRP,3\n");
        let c = read(&text, &LoadOptions::default()).unwrap().cohort;
        let mut buf = Vec::new();
        write_cohort_to(&c, &mut buf).unwrap();
        let mut orig: Vec<&str> = text.lines().collect();
        let written = String::from_utf8(buf).unwrap();
        let mut back: Vec<&str> = written.lines().collect();
        orig.sort();
        back.sort();
        assert_eq!(orig, back);
    }
}
