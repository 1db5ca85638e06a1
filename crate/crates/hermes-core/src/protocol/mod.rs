//! Protocol roles and artifacts: booking details and their canonical
//! packing, the signed booking, access tokens, the owner / consumer /
//! vehicle state machines for the four online steps, the cleartext
//! reference pipeline, the distributed token-generation drivers, and the
//! two-of-three audit reconstruction.

mod audit;
pub mod harness;
mod oracle;
mod prims;
mod roles;
mod step2;
mod types;

pub use audit::{audit_reconstruct, AuditRecord};
pub use oracle::{clear_oracle, OracleInputs, OracleOutput};
pub use prims::{
    kem_decrypt, kem_encrypt, Certificate, KemKeyPair, SignatureMode, SigningKey, VerifyingKey,
};
pub use roles::{
    boolean_session_keys, expected_tag, make_sealed_bundles, present_token, register_vehicle,
    retrieve_entry,
    vehicle_key_bits,
    vehicle_key_field, AccessDecision, AccessRequest, AtWire, Backend, Consumer,
    ConsumerRetrieval, KeyStation, Owner, RejectionReason, Vehicle, REVOKED_FLAG,
};
pub use step2::{
    step2_generate, DbRowShare, KeyBundleShare, MShares, Step2Inputs, Step2Output,
};
pub use types::{
    AccessConfirmation, BookingDetails, ProtocolMessage, ServerRow, SignedBooking, VehicleRecord,
    VmDatabase, BD_BLOCKS, BENCHMARK_M_BLOCKS,
};
