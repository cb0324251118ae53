use std::io::Write;

use hdmr_gpr::data::dataset_to_csv;

use crate::args::GenerateArgs;
use crate::config::{resolve_generator, FileConfig};
use crate::error::{CliError, CliResult};
use crate::report::{stdout_err, Provenance};
use crate::write_file;

pub fn run(a: &GenerateArgs, file: &FileConfig, seed: u64, out: &mut dyn Write) -> CliResult<()> {
    let spec = resolve_generator(&a.generator, file, seed)?;
    if spec.m == 0 {
        return Err(CliError::usage("generate needs --points"));
    }
    let prov = Provenance::new("generate", seed, &(&spec, a.with_truth));
    let data = spec.generate().map_err(|e| CliError::usage(e.to_string()))?;
    let csv = dataset_to_csv(&data.dataset, a.with_truth.then_some(data.truth.as_slice()));
    match &a.output {
        Some(path) => {
            write_file(path, &csv)?;
            prov.write_header(out)?;
            writeln!(out, "wrote {} rows of {} to {}", spec.m, spec.describe(), path.display()).map_err(stdout_err)
        }
        None => out.write_all(csv.as_bytes()).map_err(stdout_err),
    }
}
