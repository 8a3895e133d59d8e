//! Dataset CSV files and the trained-model container format.
//!
//! Datasets are plain CSV with a header naming the input then output fields
//! exactly as in the skill schema (sliding: `v_init,t_query,x,v`). Values
//! use Rust's shortest round-trip float formatting, so write/read preserves
//! every bit.
//!
//! Model files wrap the network record with the skill identity and the
//! normalization bounds (all integers and floats little-endian):
//!
//! ```text
//! magic               11 bytes   "PHYPLAN-MDL"
//! format version      u32        currently 1
//! skill name          u32 length + UTF-8 bytes
//! physics-loss flag   u8         0 or 1
//! physical params     u32 count, then per param:
//!                     name (u32 length + bytes), f64 value, u8 known flag
//! bounds              u32 count, then f64 lo, f64 hi per input field
//! training report     f64 data loss, f64 physics loss, u32 iterations,
//!                     u8 status (0 converged, 1 max-iterations,
//!                     2 line-search stop, 3 non-finite stop)
//! network             embedded "PHYPLAN-NET" record; its named parameters
//!                     are the learned physical constants
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{build_skill, DataRow, Dataset, Skill, SkillModel, SkillSpec, TrainingReport};
use crate::numerics::{read_network, write_network, Termination};
use crate::{Error, Result};

/// Leading bytes of every model file.
pub const MODEL_MAGIC: &[u8; 11] = b"PHYPLAN-MDL";
/// Current model container version.
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Writes a dataset with the schema's exact field names as header.
pub fn write_dataset_csv(path: &Path, spec: &SkillSpec, data: &Dataset) -> Result<()> {
    data.validate_for(spec)?;
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    let header: Vec<&str> = spec
        .input_fields
        .iter()
        .chain(spec.output_fields.iter())
        .copied()
        .collect();
    w.write_record(&header)
        .map_err(|e| Error::Format(e.to_string()))?;
    let mut record = Vec::with_capacity(header.len());
    for row in &data.rows {
        record.clear();
        record.extend(row.input.iter().chain(row.target.iter()).map(|v| v.to_string()));
        w.write_record(&record)
            .map_err(|e| Error::Format(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a dataset, insisting on the schema's exact header.
pub fn read_dataset_csv(path: &Path, spec: &SkillSpec) -> Result<Dataset> {
    let mut r = csv::Reader::from_reader(BufReader::new(File::open(path)?));
    let expected: Vec<&str> = spec
        .input_fields
        .iter()
        .chain(spec.output_fields.iter())
        .copied()
        .collect();
    let header = r.headers().map_err(|e| Error::Format(e.to_string()))?;
    let got: Vec<&str> = header.iter().collect();
    if got != expected {
        return Err(Error::Format(format!(
            "header mismatch for {}: expected {:?}, file has {:?}",
            spec.skill, expected, got
        )));
    }
    let (n_in, n_out) = (spec.n_inputs(), spec.n_outputs());
    let mut rows = Vec::new();
    for (line, record) in r.records().enumerate() {
        let record = record.map_err(|e| Error::Format(e.to_string()))?;
        if record.len() != n_in + n_out {
            return Err(Error::Format(format!(
                "row {}: expected {} fields, got {}",
                line + 2,
                n_in + n_out,
                record.len()
            )));
        }
        let mut values = Vec::with_capacity(n_in + n_out);
        for field in record.iter() {
            values.push(field.trim().parse::<f64>().map_err(|e| {
                Error::Format(format!("row {}: {field:?}: {e}", line + 2))
            })?);
        }
        let target = values.split_off(n_in);
        rows.push(DataRow {
            input: values,
            target,
        });
    }
    Ok(Dataset {
        rows,
        provenance: None,
    })
}

fn write_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_f64<W: Write>(w: &mut W, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_str<W: Write>(w: &mut W, s: &str) -> Result<()> {
    write_u32(w, s.len() as u32)?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

fn read_u8<R: Read>(r: &mut R) -> Result<u8> {
    let mut buf = [0u8; 1];
    r.read_exact(&mut buf)?;
    Ok(buf[0])
}

fn read_str<R: Read>(r: &mut R) -> Result<String> {
    let len = read_u32(r)? as usize;
    if len > 4096 {
        return Err(Error::Format(format!("implausible string length {len}")));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| Error::Format("string is not UTF-8".into()))
}

fn status_tag(t: Termination) -> u8 {
    match t {
        Termination::Converged => 0,
        Termination::MaxIterations => 1,
        Termination::LineSearchFailed => 2,
        Termination::NonFinite => 3,
    }
}

fn status_from_tag(tag: u8) -> Result<Termination> {
    Ok(match tag {
        0 => Termination::Converged,
        1 => Termination::MaxIterations,
        2 => Termination::LineSearchFailed,
        3 => Termination::NonFinite,
        other => return Err(Error::Format(format!("unknown status tag {other}"))),
    })
}

/// Saves a trained model.
pub fn write_model(path: &Path, model: &SkillModel) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MODEL_MAGIC)?;
    write_u32(&mut w, MODEL_FORMAT_VERSION)?;
    write_str(&mut w, model.spec.skill.name())?;
    w.write_all(&[model.spec.has_physics_loss as u8])?;
    write_u32(&mut w, model.spec.physical_params.len() as u32)?;
    for p in &model.spec.physical_params {
        write_str(&mut w, p.name)?;
        write_f64(&mut w, p.value)?;
        w.write_all(&[p.known as u8])?;
    }
    write_u32(&mut w, model.bounds.len() as u32)?;
    for &(lo, hi) in &model.bounds {
        write_f64(&mut w, lo)?;
        write_f64(&mut w, hi)?;
    }
    let report = &model.training_report;
    write_f64(&mut w, report.final_data_loss)?;
    write_f64(&mut w, report.final_physics_loss)?;
    write_u32(&mut w, report.iterations as u32)?;
    w.write_all(&[status_tag(report.status)])?;
    write_network(&mut w, &model.net, &model.learned_params)?;
    w.flush()?;
    Ok(())
}

/// Loads a model saved by [`write_model`].
pub fn read_model(path: &Path) -> Result<SkillModel> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 11];
    r.read_exact(&mut magic)?;
    if &magic != MODEL_MAGIC {
        return Err(Error::Format("bad magic, not a model file".into()));
    }
    let version = read_u32(&mut r)?;
    if version != MODEL_FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported model version {version}, expected {MODEL_FORMAT_VERSION}"
        )));
    }
    let skill = Skill::from_name(&read_str(&mut r)?)?;
    let mut spec = build_skill(skill);
    spec.has_physics_loss = read_u8(&mut r)? != 0;
    let n_params = read_u32(&mut r)? as usize;
    if n_params != spec.physical_params.len() {
        return Err(Error::Format(format!(
            "{skill} model declares {n_params} physical parameters, schema has {}",
            spec.physical_params.len()
        )));
    }
    for i in 0..n_params {
        let name = read_str(&mut r)?;
        if spec.physical_params[i].name != name {
            return Err(Error::Format(format!(
                "physical parameter {i} is {:?}, schema expects {:?}",
                name, spec.physical_params[i].name
            )));
        }
        spec.physical_params[i].value = read_f64(&mut r)?;
        spec.physical_params[i].known = read_u8(&mut r)? != 0;
    }
    let n_bounds = read_u32(&mut r)? as usize;
    if n_bounds != spec.n_inputs() {
        return Err(Error::Format(format!(
            "{n_bounds} bounds for {} input fields",
            spec.n_inputs()
        )));
    }
    let mut bounds = Vec::with_capacity(n_bounds);
    for _ in 0..n_bounds {
        let lo = read_f64(&mut r)?;
        let hi = read_f64(&mut r)?;
        bounds.push((lo, hi));
    }
    let training_report = TrainingReport {
        final_data_loss: read_f64(&mut r)?,
        final_physics_loss: read_f64(&mut r)?,
        iterations: read_u32(&mut r)? as usize,
        status: status_from_tag(read_u8(&mut r)?)?,
    };
    let (net, learned_params) = read_network(&mut r)?;
    if net.input_dim() != spec.n_inputs() || net.output_dim() != spec.n_outputs() {
        return Err(Error::Format(format!(
            "network is {}x{}, {skill} expects {}x{}",
            net.input_dim(),
            net.output_dim(),
            spec.n_inputs(),
            spec.n_outputs()
        )));
    }
    Ok(SkillModel {
        spec,
        net,
        bounds,
        learned_params,
        training_report,
    })
}
