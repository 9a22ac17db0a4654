//! Exact simulation of small qubit chains and their Pauli measurement statistics.

mod hamiltonian;
mod pauli;
mod state;

pub use hamiltonian::{
    build_hamiltonian, dense_ground, ground_state, sample_couplings, GroundState, Hamiltonian,
    SignMode, SpinModel, SpinModelSpec, DEFAULT_MAX_QUBITS,
};
pub use pauli::{
    born_probabilities, enumerate_settings, local_rotation, make_rotated_ghz_w,
    parametrize_measurement, sample_shots, EntangledKind, MeasurementMode, Pauli, PauliSetting,
};
pub use state::QubitState;
