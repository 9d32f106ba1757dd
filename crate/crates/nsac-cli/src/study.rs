use std::path::Path;

use nsac_core::config::RunConfig;
use nsac_core::preset;
use nsac_core::study::reference_convergence_study_threaded;
use nsac_core::{Error, Result};

pub fn cmd_study(config: &Path, out: &Path) -> Result<()> {
    let cfg = RunConfig::load(config)?;
    cfg.validate()?;
    let name = cfg
        .preset
        .as_deref()
        .ok_or_else(|| Error::config("study needs 'preset' in the config"))?;
    let p = preset::by_name(name)?;
    if cfg.n_list.is_empty() {
        return Err(Error::config("study needs 'n_list' in the config"));
    }
    let threads = crate::thread_cap()?;

    let table = reference_convergence_study_threaded(p, &cfg.n_list, &cfg.params, threads)?;

    std::fs::create_dir_all(out)?;
    let path = out.join("study.csv");
    std::fs::write(&path, table.to_csv())?;

    println!(
        "study: preset {}, reference n = {}, {} rows -> {}",
        table.preset,
        table.reference_n,
        table.rows.len(),
        path.display()
    );
    for r in &table.rows {
        println!(
            "  n = {:>3}: rel_energy = {:.6e}, e1 = {:.3e}, e2 = {:.3e}, e3 = {:.3e}",
            r.n, r.rel_energy, r.e1, r.e2, r.e3
        );
    }
    Ok(())
}
