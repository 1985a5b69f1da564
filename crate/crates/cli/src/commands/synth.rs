use crate::config::RunConfig;
use crate::error::CliResult;
use crate::synth::{write_dataset, SynthManifest, SyntheticWorld};

pub fn run(config: &RunConfig) -> CliResult<SynthManifest> {
    let world = SyntheticWorld::new(&config.synth_spec(), config.clear_sky()?)?;
    let p = &config.paths;
    let manifest = write_dataset(&world, config.linke_turbidity, &p.grids_dir, &p.registry, &p.series_dir)?;
    log::info!(
        "synthetic dataset: {} days, {} grid instants, {} stations",
        manifest.spec.n_days,
        manifest.n_grid_instants,
        manifest.stations.len()
    );
    Ok(manifest)
}
