//! EDF ingestion, preprocessing and spectral features for scalp EEG.

pub mod edf;
pub mod epoch;
pub mod error;
pub mod filter;
pub mod montage;
pub mod recording;
pub mod resample;
pub mod store;
pub mod welch;

pub use edf::{read_edf, read_header, write_edf, EdfHeader, SignalHeader};
pub use epoch::{epoch, samples_per_epoch, EpochedRecording};
pub use error::{Result, SignalError};
pub use filter::{bandpass_notch, butterworth_qs, Biquad, FilterConfig, SosFilter};
pub use montage::{canonical_label, montage_map, CANONICAL_CHANNELS};
pub use recording::EegRecording;
pub use resample::{resample, resample_channel};
pub use store::{epoch_paths, load_epochs, save_epochs, Sidecar};
pub use welch::{
    default_bands, floor_db, segment_band_powers, standard_bands, to_db, welch_band_power, Band, BandPowerFeatures,
    Welch, POWER_FLOOR,
};

/// Resample, filter and montage in the order used for corpus preparation.
pub fn preprocess(rec: &EegRecording, target_hz: f64, filter: &FilterConfig) -> Result<EegRecording> {
    let resampled = resample(rec, target_hz)?;
    let filtered = bandpass_notch(&resampled, filter)?;
    Ok(montage_map(&filtered))
}
