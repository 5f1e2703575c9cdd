//! Numeric CSV datasets and plain-text model files.
//!
//! Dataset header: `x0..x{d-1},y[,z][,c][,y_rep0..]` where `z` is the
//! group indicator, `c` the confounder and `y_rep*` the label replicates.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use mdro::{Dataset, ParamVector};

use crate::{CliError, CliResult};

pub fn dataset_to_csv(data: &Dataset<f64>) -> String {
    let d = data.dim();
    let m = data.n_replicates();
    let mut header: Vec<String> = (0..d).map(|k| format!("x{k}")).collect();
    header.push("y".into());
    if data.group().is_some() {
        header.push("z".into());
    }
    if data.confounder().is_some() {
        header.push("c".into());
    }
    header.extend((0..m).map(|k| format!("y_rep{k}")));
    let mut out = header.join(",");
    out.push('\n');
    for i in 0..data.len() {
        let mut fields: Vec<String> = data.row(i).iter().map(|v| v.to_string()).collect();
        fields.push(data.labels()[i].to_string());
        if let Some(g) = data.group() {
            fields.push(g[i].to_string());
        }
        if let Some(c) = data.confounder() {
            fields.push(c[i].to_string());
        }
        if let Some(reps) = data.replicate_row(i) {
            fields.extend(reps.iter().map(|v| v.to_string()));
        }
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

enum Column {
    Feature(usize),
    Label,
    Group,
    Confounder,
    Replicate(usize),
}

fn classify(name: &str) -> Option<Column> {
    match name {
        "y" => Some(Column::Label),
        "z" => Some(Column::Group),
        "c" => Some(Column::Confounder),
        _ => {
            if let Some(k) = name.strip_prefix("y_rep") {
                k.parse().ok().map(Column::Replicate)
            } else {
                name.strip_prefix('x').and_then(|k| k.parse().ok()).map(Column::Feature)
            }
        }
    }
}

pub fn dataset_from_csv(text: &str, origin: &Path) -> CliResult<Dataset<f64>> {
    let parse_err = |reason: String| CliError::Parse {
        path: origin.to_path_buf(),
        reason,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| parse_err(e.to_string()))?.clone();
    let columns: Vec<Column> = headers
        .iter()
        .map(|h| classify(h).ok_or_else(|| parse_err(format!("unrecognized column '{h}'"))))
        .collect::<CliResult<_>>()?;
    let d = columns.iter().filter(|c| matches!(c, Column::Feature(_))).count();
    let m = columns.iter().filter(|c| matches!(c, Column::Replicate(_))).count();
    let has_label = columns.iter().any(|c| matches!(c, Column::Label));
    if d == 0 || !has_label {
        return Err(parse_err("need at least one x column and a y column".into()));
    }
    for (k, c) in columns.iter().enumerate() {
        let ok = match c {
            Column::Feature(j) => *j < d,
            Column::Replicate(j) => *j < m,
            _ => true,
        };
        if !ok {
            return Err(parse_err(format!("column '{}' is out of sequence", &headers[k])));
        }
    }
    let has_group = columns.iter().any(|c| matches!(c, Column::Group));
    let has_conf = columns.iter().any(|c| matches!(c, Column::Confounder));

    let (mut features, mut labels, mut group, mut conf, mut reps) =
        (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| parse_err(e.to_string()))?;
        if record.len() != columns.len() {
            return Err(parse_err(format!("row {}: expected {} fields", r + 1, columns.len())));
        }
        let mut row = vec![0.0; d];
        let mut rep_row = vec![0.0; m];
        for (field, col) in record.iter().zip(&columns) {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(format!("row {}: '{field}' is not a number", r + 1)))?;
            match col {
                Column::Feature(j) => row[*j] = v,
                Column::Label => labels.push(v),
                Column::Group => {
                    if v != 0.0 && v != 1.0 {
                        return Err(parse_err(format!("row {}: group must be 0 or 1", r + 1)));
                    }
                    group.push(v as u8)
                }
                Column::Confounder => conf.push(v),
                Column::Replicate(j) => rep_row[*j] = v,
            }
        }
        features.extend(row);
        reps.extend(rep_row);
    }
    let mut data = Dataset::new(features, d, labels)?;
    if has_group {
        data = data.with_group(group)?;
    }
    if has_conf {
        data = data.with_confounder(conf)?;
    }
    if m > 0 {
        data = data.with_replicates(m, reps)?;
    }
    Ok(data)
}

pub fn read_dataset(path: &Path) -> CliResult<Dataset<f64>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    dataset_from_csv(&text, path)
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// One number per line: the slopes, then the intercept.
pub fn model_to_text(params: &ParamVector<f64>) -> String {
    let mut out = String::new();
    for v in params.theta.iter().chain(std::iter::once(&params.intercept)) {
        let _ = writeln!(out, "{v}");
    }
    out
}

pub fn model_from_text(text: &str, origin: &Path) -> CliResult<ParamVector<f64>> {
    let mut values = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        values.push(line.parse::<f64>().map_err(|_| CliError::Parse {
            path: origin.to_path_buf(),
            reason: format!("line {}: '{line}' is not a number", k + 1),
        })?);
    }
    if values.len() < 2 {
        return Err(CliError::Parse {
            path: origin.to_path_buf(),
            reason: "a model needs at least one slope and an intercept".into(),
        });
    }
    let intercept = values.pop().expect("nonempty");
    Ok(ParamVector::new(values, intercept)?)
}

pub fn read_model(path: &Path) -> CliResult<ParamVector<f64>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    model_from_text(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use mdro::datagen::{generate_replicates, SimSpec, Variant};

    #[test]
    fn dataset_round_trip() {
        let spec = SimSpec::new(Variant::Confounded, 25, 3, 4);
        let data: Dataset<f64> = generate_replicates(&spec, 2).unwrap();
        let text = dataset_to_csv(&data);
        assert!(text.starts_with("x0,x1,x2,y,z,c,y_rep0,y_rep1\n"));
        let back = dataset_from_csv(&text, Path::new("mem")).unwrap();
        assert_eq!(back, data);
    }

    #[test]
    fn rejects_bad_tables() {
        let p = Path::new("mem");
        assert!(dataset_from_csv("x0,q\n1,2\n", p).is_err());
        assert!(dataset_from_csv("x0,y\n1,abc\n", p).is_err());
        assert!(dataset_from_csv("x1,y\n1,2\n", p).is_err());
        assert!(dataset_from_csv("x0,y,z\n1,2,3\n", p).is_err());
    }

    #[test]
    fn model_round_trip() {
        let m = ParamVector::new(vec![0.25, -1.5], 0.125).unwrap();
        let text = model_to_text(&m);
        assert_eq!(text, "0.25\n-1.5\n0.125\n");
        assert_eq!(model_from_text(&text, Path::new("mem")).unwrap(), m);
    }
}
