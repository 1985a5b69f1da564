//! Station irradiance-to-power regression: fleet cleaning, features,
//! day-block splits, boosted trees and fleet-scale prediction.

mod clean;
mod features;
mod gbrt;
mod model;
mod split;
mod station;

pub use clean::{
    check_station, clean_fleet, period_stats, relative_difference, CleaningMode, CleaningReport, PeriodStats,
    RejectReason, Rejection, DEFAULT_TOLERANCE,
};
pub use features::{build_features, cyclic, day_of_year, hour_of_day, FeatureVector, DAYS_PER_YEAR, FEATURE_NAMES, N_FEATURES};
pub use gbrt::{Dataset, Gbrt, GbrtParams, Node, Tree};
pub use model::{
    fleet_total, is_night, predict_power, split_nrmse, station_samples, train_station_model, FleetTotal,
    PowerForecast, SsiSeries, StationModel, TrainingOptions, MIN_TRAINING_SAMPLES,
};
pub use split::{Split, SplitPlan, BLOCK_LENGTH, TRAIN_DAYS};
pub use station::{
    load_fleet, read_registry, series_file_name, write_registry, PowerSeries, Station, StationInfo,
};
