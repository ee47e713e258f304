use std::io::{Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scm::{ScmTemplate, UnrolledScm, Value, VarId};

/// Endogenous values of `samples` independent un-intervened trajectories.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObservationalDataset {
    variables: Vec<String>,
    slices: usize,
    samples: usize,
    /// Sample-major, then slice, then variable.
    values: Vec<Value>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Row<'a> {
    sample: usize,
    slice: usize,
    variable: &'a str,
    value: Value,
}

impl ObservationalDataset {
    pub fn variables(&self) -> &[String] {
        &self.variables
    }

    pub fn slices(&self) -> usize {
        self.slices
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn get(&self, sample: usize, slice: usize, var: VarId) -> Value {
        let n = self.variables.len();
        self.values[(sample * self.slices + slice) * n + var.0]
    }

    /// Values of all variables at one slice of one sample.
    pub fn slice_row(&self, sample: usize, slice: usize) -> &[Value] {
        let n = self.variables.len();
        let start = (sample * self.slices + slice) * n;
        &self.values[start..start + n]
    }

    /// Long-format CSV: `sample,slice,variable,value`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for sample in 0..self.samples {
            for slice in 0..self.slices {
                for (v, name) in self.variables.iter().enumerate() {
                    out.serialize(Row {
                        sample,
                        slice,
                        variable: name,
                        value: self.get(sample, slice, VarId(v)),
                    })?;
                }
            }
        }
        out.flush()?;
        Ok(())
    }

    /// Reads the long-format CSV back, checking every value against `template`.
    pub fn read_csv<R: Read>(r: R, template: &ScmTemplate) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut cells: Vec<(usize, usize, usize, Value)> = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let row: Row = rec.deserialize(None)?;
            let var = template
                .var_id(row.variable)
                .map_err(|_| Error::DatasetMismatch(format!("unknown variable `{}`", row.variable)))?;
            if !template.variable(var).domain.contains(row.value) {
                return Err(Error::DomainViolation {
                    variable: row.variable.to_string(),
                    value: row.value,
                });
            }
            cells.push((row.sample, row.slice, var.0, row.value));
        }
        let samples = cells.iter().map(|c| c.0 + 1).max().unwrap_or(0);
        let slices = cells.iter().map(|c| c.1 + 1).max().unwrap_or(0);
        if samples == 0 {
            return Err(Error::NoSamples);
        }
        let n = template.variables.len();
        if cells.len() != samples * slices * n {
            return Err(Error::DatasetMismatch(format!(
                "expected {} cells for {samples} samples x {slices} slices, found {}",
                samples * slices * n,
                cells.len()
            )));
        }
        let mut values = vec![None; samples * slices * n];
        for (s, t, v, x) in cells {
            let slot = &mut values[(s * slices + t) * n + v];
            if slot.replace(x).is_some() {
                return Err(Error::DatasetMismatch(format!(
                    "duplicate cell sample={s} slice={t}"
                )));
            }
        }
        Ok(Self {
            variables: template.variables.iter().map(|v| v.name.clone()).collect(),
            slices,
            samples,
            values: values.into_iter().map(|x| x.expect("count checked")).collect(),
        })
    }
}

/// Draws `n` trajectories from an un-intervened model.
pub fn generate_observational<R: Rng + ?Sized>(
    scm: &UnrolledScm,
    n: usize,
    rng: &mut R,
) -> Result<ObservationalDataset> {
    if n == 0 {
        return Err(Error::NoSamples);
    }
    if scm.is_intervened() {
        return Err(Error::IntervenedObservational);
    }
    let t = scm.template();
    let slices = scm.slices();
    let mut values = Vec::with_capacity(n * slices * t.variables.len());
    for _ in 0..n {
        let tr = scm.sample_trajectory(rng);
        for row in tr.endogenous {
            values.extend(row);
        }
    }
    Ok(ObservationalDataset {
        variables: t.variables.iter().map(|v| v.name.clone()).collect(),
        slices,
        samples: n,
        values,
    })
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::scm::{unroll, Intervention};
    use crate::toy;

    #[test]
    fn z0_marginal_matches_its_exogenous_source() {
        let t = toy::template();
        let scm = unroll(&t, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let data = generate_observational(&scm, n, &mut rng).unwrap();
        let z = t.var_id("Z").unwrap();
        let hat = (0..n).filter(|&s| data.get(s, 0, z) == 1).count() as f64 / n as f64;
        let se = (0.6f64 * 0.4 / n as f64).sqrt();
        assert!((hat - 0.6).abs() <= 4.0 * se, "{hat}");
    }

    #[test]
    fn preconditions() {
        let t = toy::template();
        let scm = unroll(&t, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            generate_observational(&scm, 0, &mut rng),
            Err(Error::NoSamples)
        ));
        let cut = scm
            .mutilate(0, &Intervention::named(&t, &[("Z", 1)]).unwrap())
            .unwrap();
        assert!(matches!(
            generate_observational(&cut, 10, &mut rng),
            Err(Error::IntervenedObservational)
        ));
    }

    #[test]
    fn csv_round_trip() {
        let t = toy::template();
        let scm = unroll(&t, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data = generate_observational(&scm, 25, &mut rng).unwrap();
        let mut buf = Vec::new();
        data.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("sample,slice,variable,value\n"));
        let back = ObservationalDataset::read_csv(buf.as_slice(), &t).unwrap();
        assert_eq!(back, data);
    }

    #[test]
    fn csv_rejects_out_of_domain_and_ragged_input() {
        let t = toy::template();
        let bad = "sample,slice,variable,value\n0,0,Z,3\n";
        assert!(ObservationalDataset::read_csv(bad.as_bytes(), &t).is_err());
        let ragged = "sample,slice,variable,value\n0,0,Z,1\n0,0,X,0\n";
        assert!(matches!(
            ObservationalDataset::read_csv(ragged.as_bytes(), &t),
            Err(Error::DatasetMismatch(_))
        ));
    }
}
