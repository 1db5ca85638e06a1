//! In-process scenario builder and runner: provisions vehicles, registers
//! their shares, derives session keys, seals the key bundles, sizes the
//! dealer tapes and drives a three-party token generation over the loopback
//! fabric. Used by the benchmark sweep and the test suites; the networked
//! deployment wires the same pieces through the server daemon instead.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::eqz::EqzConfig;
use crate::field::FieldParams;
use crate::mimc::SessionKeys;
use crate::share::{BitShareVec, PartyId, RepShare};
use crate::tape::{dealer_generate, PreprocessingTape, TapeCounts};
use crate::transport::run_local_session;
use crate::{Error, Result};

use super::oracle::{clear_oracle, OracleInputs, OracleOutput};
use super::prims::{kem_decrypt, KemKeyPair, SignatureMode};
use super::roles::{register_vehicle, Backend, Consumer, Owner};
use super::step2::{step2_generate, DbRowShare, KeyBundleShare, MShares, Step2Inputs, Step2Output};
use super::types::{BookingDetails, ServerRow, SignedBooking, VehicleRecord};

/// Dealer budget sufficient for one token generation against `n` rows.
pub fn required_tape_counts(backend: Backend, n_vehicles: usize) -> TapeCounts {
    let n = n_vehicles as u64;
    match backend {
        Backend::Mimc => TapeCounts {
            // Equality: one square per row plus the 103-mul tree; selection:
            // one mul per row.
            zero_shares: 105 * n + 16,
            and_zero_shares: 0,
            random_bits: 104 * n,
            // 18 chains in the first batch, 11 in the second, 81 rounds each.
            cube_tuples: 29 * 81 + 16,
        },
        Backend::Aes => TapeCounts {
            zero_shares: 0,
            // 159 per row plus 27 AES calls.
            and_zero_shares: 159 * n + 27 * 6400 + 64,
            random_bits: 0,
            cube_tuples: 0,
        },
    }
}

/// A fully provisioned single-booking scenario.
pub struct Scenario {
    pub backend: Backend,
    pub field: FieldParams,
    pub owner: Owner,
    pub consumer: Consumer,
    pub bd: BookingDetails,
    pub m: SignedBooking,
    pub keys: SessionKeys,
    pub vehicles: Vec<VehicleRecord>,
    pub target_vehicle: usize,
    pub server_kems: [KemKeyPair; 3],
    pub sealed_bundles: [Vec<u8>; 3],
    pub server_rows: [Vec<ServerRow>; 3],
    pub m_shares: [MShares; 3],
    pub target_id_shares: [Option<RepShare>; 3],
    pub session_id: [u8; 16],
    pub booking_id: u32,
}

/// Booking window used by generated scenarios.
pub const SCENARIO_WINDOW: (u32, u32) = (1_000_000, 2_000_000);

pub struct ScenarioConfig {
    pub backend: Backend,
    pub n_vehicles: usize,
    pub seed: u64,
    pub signature_mode: SignatureMode,
}

impl ScenarioConfig {
    pub fn new(backend: Backend, n_vehicles: usize, seed: u64) -> ScenarioConfig {
        ScenarioConfig { backend, n_vehicles, seed, signature_mode: SignatureMode::Compact512 }
    }
}

/// Builds a scenario: `n` vehicles under one owner, a booking for one of
/// them, session keys at counter 1, and all shares the servers would hold
/// after steps A and 1.
pub fn build_scenario(cfg: &ScenarioConfig) -> Result<Scenario> {
    let field = FieldParams::production();
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let owner = Owner::new("owner-1", cfg.signature_mode, &field, &mut rng);
    let mut consumer = Consumer::new("consumer-1", &field, &mut rng);

    let mut vehicles = Vec::with_capacity(cfg.n_vehicles);
    for i in 0..cfg.n_vehicles {
        let mut key = [0u8; 16];
        rng.fill_bytes(&mut key);
        vehicles.push(VehicleRecord {
            owner_id: owner.id.clone(),
            vehicle_id: 0x0100_0000 + i as u32,
            key,
        });
    }
    let target_vehicle = (rng.next_u32() as usize) % cfg.n_vehicles;

    // Step A: registration shares per server.
    let mut server_rows: [Vec<ServerRow>; 3] = Default::default();
    for (idx, rec) in vehicles.iter().enumerate() {
        let rows = register_vehicle(&field, rec, idx as u32, &mut rng);
        for (i, r) in rows.into_iter().enumerate() {
            server_rows[i].push(r);
        }
    }

    let booking_id = 0x00AB_0000 | (cfg.seed as u32 & 0xFFFF);
    let bd = BookingDetails {
        cert_hash: consumer.cert.digest(),
        vehicle_id: vehicles[target_vehicle].vehicle_id,
        location: 0x4247_524144452121,
        cd_start: SCENARIO_WINDOW.0,
        cd_end: SCENARIO_WINDOW.1,
        cd_flags: 0,
        access_rights: 0b0000_0111,
        booking_id,
    };
    let m = SignedBooking::sign(bd.clone(), &owner.signing)?;

    // Step 1: session keys, sealed bundles, message shares.
    let server_kems: [KemKeyPair; 3] = std::array::from_fn(|_| KemKeyPair::generate(&mut rng));
    let server_pubs: [[u8; 32]; 3] = std::array::from_fn(|i| server_kems[i].public);
    let (keys, sealed_bundles) =
        consumer.session_key_gen(cfg.backend, 1, &server_pubs, &mut rng)?;
    let (m_shares, target_id_shares) =
        owner.share_signed_booking(cfg.backend, &field, &m, &mut rng);
    let session_id = owner.new_session_id(&mut rng);

    Ok(Scenario {
        backend: cfg.backend,
        field,
        owner,
        consumer,
        bd,
        m,
        keys,
        vehicles,
        target_vehicle,
        server_kems,
        sealed_bundles,
        server_rows,
        m_shares,
        target_id_shares,
        session_id,
        booking_id,
    })
}

impl Scenario {
    pub fn vehicle_key(&self) -> [u8; 16] {
        self.vehicles[self.target_vehicle].key
    }

    /// The reference outputs the distributed run must reproduce.
    pub fn oracle(&self) -> Result<OracleOutput> {
        clear_oracle(
            &self.field,
            &OracleInputs {
                backend: self.backend,
                m: self.m.clone(),
                keys: self.keys.clone(),
                vehicle_key: self.vehicle_key(),
            },
        )
    }

    /// Decodes one server's stored rows into its share view.
    pub fn db_rows_for(&self, party: PartyId) -> Result<Vec<DbRowShare>> {
        decode_db_rows(self.backend, &self.field, party, &self.server_rows[party.index()])
    }

    /// Assembles one party's step-2 inputs, decrypting its sealed bundle.
    pub fn step2_inputs_for(&self, party: PartyId) -> Result<Step2Inputs> {
        let sealed = &self.sealed_bundles[party.index()];
        let bundle_bytes = kem_decrypt(&self.server_kems[party.index()], sealed)?;
        let bundle = KeyBundleShare::decode(party, &self.field, &bundle_bytes)?;
        Ok(Step2Inputs {
            session_id: self.session_id,
            booking_id: self.booking_id,
            owner_id: self.owner.id.clone(),
            bundle,
            m_shares: self.m_shares[party.index()].clone(),
            target_id_share: self.target_id_shares[party.index()].clone(),
            rows: self.db_rows_for(party)?,
            eqz: EqzConfig::production(),
        })
    }
}

/// Decodes stored registration rows for one backend.
pub fn decode_db_rows(
    backend: Backend,
    field: &FieldParams,
    party: PartyId,
    rows: &[ServerRow],
) -> Result<Vec<DbRowShare>> {
    rows.iter()
        .map(|r| match backend {
            Backend::Mimc => Ok(DbRowShare::Field {
                id: RepShare::decode(party, field, &r.id_share_field)?,
                key: RepShare::decode(party, field, &r.key_share_field)?,
            }),
            Backend::Aes => Ok(DbRowShare::Bits {
                id: BitShareVec::decode(party, &r.id_share_bits)?,
                key: BitShareVec::decode(party, &r.key_share_bits)?,
            }),
        })
        .collect()
}

/// Drives the three parties of one token generation over loopback with
/// fresh dealer tapes. Returns the per-party outputs (public parts equal).
pub fn run_step2_local(scenario: &Scenario, tape_seed: [u8; 32]) -> Result<[Step2Output; 3]> {
    let counts = required_tape_counts(scenario.backend, scenario.vehicles.len());
    let tapes = dealer_generate(&scenario.field, counts, tape_seed);
    run_step2_local_with_tapes(scenario, tapes)
}

pub fn run_step2_local_with_tapes(
    scenario: &Scenario,
    tapes: [PreprocessingTape; 3],
) -> Result<[Step2Output; 3]> {
    let inputs: [Step2Inputs; 3] = [
        scenario.step2_inputs_for(PartyId(0))?,
        scenario.step2_inputs_for(PartyId(1))?,
        scenario.step2_inputs_for(PartyId(2))?,
    ];
    let work = std::sync::Mutex::new(
        inputs
            .into_iter()
            .zip(tapes)
            .map(Some)
            .collect::<Vec<_>>(),
    );
    let out = run_local_session(scenario.session_id, move |party, ch| {
        let (inputs, mut tape) = work.lock().unwrap()[party.index()].take().unwrap();
        step2_generate(ch, &mut tape, &inputs)
    })?;
    let [a, b, c] = out;
    if a.c_uc != b.c_uc || b.c_uc != c.c_uc || a.auth_tag != b.auth_tag || b.auth_tag != c.auth_tag
    {
        return Err(Error::ShareIntegrity(
            "parties disagree on the public session outputs".into(),
        ));
    }
    Ok([a, b, c])
}
