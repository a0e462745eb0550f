//! Aerodynamic surrogates: the FiLM field network, the scalar L/D network
//! used by inverse design, and the synthetic oracle that labels training data.

mod film;
mod ld;
mod oracle;

pub use film::{
    field_loss, film_condition, train_field_surrogate, FieldCase, FieldScaler, FieldSurrogate,
    FieldTrainConfig, FilmConfig, FilmModel, FIELD_CHANNELS, FILM_CONDITION_ORDER,
};
pub use ld::{
    ld_raw_input, train_ld_surrogate, LdConfig, LdSample, LdSurrogate, LdTrainConfig, LD_INPUT_DIM,
    LD_INPUT_ORDER,
};
pub use oracle::{oracle_aero, AeroCoefficients, OracleConfig, OracleResult};
