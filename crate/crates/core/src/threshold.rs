//! Per-task (t, n) threshold signatures over a Schnorr group.
//!
//! A trusted dealer (standing in for a distributed key-generation round,
//! seeded from the task's public random number so every honest participant
//! derives the same material) samples a degree t-1 polynomial `f` over Z_q
//! and hands signer `i` the share `sk_i = f(i)`. A signature fragment is the
//! scalar `sigma_i = sk_i * H(msg) mod q`; any t fragments recombine through
//! Lagrange interpolation at zero into the group signature
//! `sigma = f(0) * H(msg) mod q`, which verifies against the group key
//! `pk = g^f(0) mod p`.
//!
//! The scheme is structural, not a hardened signature: publishing a fragment
//! reveals its share (`sk_i = sigma_i * H(msg)^-1 mod q`), so a key set is
//! good for exactly one aggregation. Callers retire a task's key material
//! after its first aggregation; key sets are freshly dealt per task, which is
//! what makes the one-shot property acceptable here.
//!
//! Two parameter profiles ship with the crate: a 256-bit production-shaped
//! group and a deliberately breakable 467/233 group small enough for
//! exhaustive tests (every exponent can be brute-forced).

use num_bigint::BigUint;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};
use std::sync::OnceLock;

use crate::wire::{tag, Reader, WireError, Writer};

/// 256-bit safe-prime group: `p = 2q + 1`, `g = 4` generates the order-q
/// subgroup of quadratic residues.
const DEFAULT_P_HEX: &str = "1e1ddb9fc6deb1f9e91bba8368965bf37bfb824ef104253f216b055eb980fd4f3";
const DEFAULT_Q_HEX: &str = "f0eedcfe36f58fcf48ddd41b44b2df9bdfdc1277882129f90b582af5cc07ea79";

/// Tiny safe-prime group (p = 467, q = 233, g = 4) for exhaustive testing.
pub const TINY_P: u32 = 467;
/// Subgroup order of the tiny group.
pub const TINY_Q: u32 = 233;
/// Generator shared by both shipped groups.
pub const GENERATOR: u32 = 4;

/// Failures from parameter construction, dealing, or aggregation.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ThresholdError {
    #[error("threshold {threshold} must satisfy 1 <= t <= n = {members}")]
    BadThreshold { threshold: usize, members: usize },
    #[error("q must divide p - 1")]
    BadSubgroupOrder,
    #[error("generator must have order q (g != 1 and g^q = 1 mod p)")]
    BadGenerator,
    #[error("got {got} distinct fragments but the threshold needs {need}")]
    ThresholdNotMet { got: usize, need: usize },
    #[error("duplicate fragment from signer {index}")]
    DuplicateSigner { index: u32 },
    #[error("fragment from signer {index} does not verify against its public share")]
    InvalidFragment { index: u32 },
    #[error("fragment from signer {index} was produced over a different message digest")]
    MixedDigests { index: u32 },
    #[error("no public share known for signer {index}")]
    UnknownSigner { index: u32 },
}

/// Group description plus the per-task (t, n) signing arrangement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemeParams {
    /// Field prime.
    pub p: BigUint,
    /// Order of the signing subgroup; prime divisor of `p - 1`.
    pub q: BigUint,
    /// Generator of the order-q subgroup.
    pub g: BigUint,
    /// Bit length of `q`.
    pub security_bits: u64,
    /// Fragments required to recombine a signature.
    pub threshold: usize,
    /// Number of dealt shares.
    pub members: usize,
}

impl SchemeParams {
    /// Validates the group structure and the (t, n) arrangement. Primality of
    /// `p` and `q` is the caller's obligation; the shipped profiles are
    /// covered by tests.
    pub fn new(
        p: BigUint,
        q: BigUint,
        g: BigUint,
        threshold: usize,
        members: usize,
    ) -> Result<Self, ThresholdError> {
        if threshold < 1 || threshold > members {
            return Err(ThresholdError::BadThreshold { threshold, members });
        }
        if (&p - 1u32) % &q != BigUint::zero() {
            return Err(ThresholdError::BadSubgroupOrder);
        }
        if g <= BigUint::one() || g.modpow(&q, &p) != BigUint::one() {
            return Err(ThresholdError::BadGenerator);
        }
        let security_bits = q.bits();
        Ok(Self { p, q, g, security_bits, threshold, members })
    }

    /// 256-bit profile used by default in simulations.
    pub fn default_256(threshold: usize, members: usize) -> Result<Self, ThresholdError> {
        static GROUP: OnceLock<(BigUint, BigUint)> = OnceLock::new();
        let (p, q) = GROUP.get_or_init(|| {
            let p = BigUint::parse_bytes(DEFAULT_P_HEX.as_bytes(), 16).expect("valid hex");
            let q = BigUint::parse_bytes(DEFAULT_Q_HEX.as_bytes(), 16).expect("valid hex");
            (p, q)
        });
        Self::new(p.clone(), q.clone(), BigUint::from(GENERATOR), threshold, members)
    }

    /// Tiny exhaustively-checkable profile (p = 467, q = 233).
    pub fn tiny(threshold: usize, members: usize) -> Result<Self, ThresholdError> {
        Self::new(
            BigUint::from(TINY_P),
            BigUint::from(TINY_Q),
            BigUint::from(GENERATOR),
            threshold,
            members,
        )
    }
}

/// Named group profile, so task metadata can reference a group without
/// shipping the full modulus over the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamsProfile {
    /// `p = 467`, `q = 233`: exhaustively checkable, fast enough for large sweeps.
    Tiny,
    /// The 256-bit default group.
    Default256,
}

impl ParamsProfile {
    /// Instantiates scheme parameters for a `(threshold, members)` pair.
    pub fn build(self, threshold: usize, members: usize) -> Result<SchemeParams, ThresholdError> {
        match self {
            ParamsProfile::Tiny => SchemeParams::tiny(threshold, members),
            ParamsProfile::Default256 => SchemeParams::default_256(threshold, members),
        }
    }

    /// Stable numeric code used by the wire encoding.
    pub fn code(self) -> u64 {
        match self {
            ParamsProfile::Tiny => 0,
            ParamsProfile::Default256 => 1,
        }
    }

    /// Inverse of [`ParamsProfile::code`].
    pub fn from_code(code: u64) -> Option<Self> {
        match code {
            0 => Some(ParamsProfile::Tiny),
            1 => Some(ParamsProfile::Default256),
            _ => None,
        }
    }
}

/// One dealt signing share: `secret = f(index)`, `public = g^secret mod p`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyShare {
    /// 1-based signer index (the polynomial is evaluated at this point).
    pub index: u32,
    /// Secret scalar share.
    pub secret: BigUint,
    /// Public image of the share.
    pub public: BigUint,
}

/// Public key of the dealt group.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupKey(pub BigUint);

/// Public share of one signer, as distributed to verifiers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SharePublic {
    pub index: u32,
    pub key: BigUint,
}

/// Full dealer output for one task. `group_secret` exists because the dealer
/// is simulated; nothing outside tests should read it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeySet {
    pub group_key: GroupKey,
    pub shares: Vec<KeyShare>,
    pub group_secret: BigUint,
}

impl KeySet {
    /// Public shares in signer-index order, for distribution to verifiers.
    pub fn share_publics(&self) -> Vec<SharePublic> {
        self.shares
            .iter()
            .map(|s| SharePublic { index: s.index, key: s.public.clone() })
            .collect()
    }
}

/// One signer's signature fragment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartialSignature {
    /// 1-based signer index.
    pub signer: u32,
    /// `secret_share * scalar(digest) mod q`.
    pub sigma: BigUint,
    /// SHA-256 of the signed message; doubles as the fragment-grouping key.
    pub digest: [u8; 32],
}

/// Recombined threshold signature.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupSignature {
    /// `group_secret * scalar(digest) mod q`, independent of the subset used.
    pub sigma: BigUint,
    /// SHA-256 of the signed message.
    pub digest: [u8; 32],
}

/// Single-signer keypair with the same group, used by committee leaders to
/// endorse settlement packages (the t = n = 1 case of the scheme).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LeaderKeypair {
    pub secret: BigUint,
    pub public: BigUint,
}

/// Single-signer signature emitted by [`leader_sign`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LeaderSignature {
    pub sigma: BigUint,
    pub digest: [u8; 32],
}

/// SHA-256 identity digest of a message.
pub fn message_digest(msg: &[u8]) -> [u8; 32] {
    Sha256::digest(msg).into()
}

/// Maps a digest into a nonzero signing scalar in Z_q. A zero residue (which
/// would make every signature vacuously zero) is escaped by re-hashing the
/// digest with an incrementing counter byte until the residue is nonzero.
pub fn scalar_from_digest(digest: &[u8; 32], q: &BigUint) -> BigUint {
    let mut current = BigUint::from_bytes_be(digest) % q;
    let mut rehash = *digest;
    let mut counter = 0u8;
    while current.is_zero() {
        counter = counter.checked_add(1).expect("rehash counter exhausted");
        let mut hasher = Sha256::new();
        hasher.update(rehash);
        hasher.update([counter]);
        rehash = hasher.finalize().into();
        current = BigUint::from_bytes_be(&rehash) % q;
    }
    current
}

/// Uniform scalar in Z_q, by oversampling 128 extra bits and reducing.
fn random_scalar(q: &BigUint, rng: &mut impl Rng) -> BigUint {
    let len = q.to_bytes_be().len() + 16;
    let mut bytes = vec![0u8; len];
    rng.fill(bytes.as_mut_slice());
    BigUint::from_bytes_be(&bytes) % q
}

/// Deals a fresh key set: samples a degree t-1 polynomial over Z_q from the
/// seed and evaluates it at 1..=n. Identical (params, seed) inputs produce
/// identical key sets, which is how every simulated party independently
/// arrives at the same dealt material.
pub fn generate(params: &SchemeParams, seed: u64) -> KeySet {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let coeffs: Vec<BigUint> =
        (0..params.threshold).map(|_| random_scalar(&params.q, &mut rng)).collect();
    let shares = (1..=params.members as u32)
        .map(|index| {
            let x = BigUint::from(index);
            // Horner evaluation of f at x, mod q.
            let secret = coeffs
                .iter()
                .rev()
                .fold(BigUint::zero(), |acc, c| (acc * &x + c) % &params.q);
            let public = params.g.modpow(&secret, &params.p);
            KeyShare { index, secret, public }
        })
        .collect();
    let group_secret = coeffs[0].clone();
    let group_key = GroupKey(params.g.modpow(&group_secret, &params.p));
    KeySet { group_key, shares, group_secret }
}

/// Produces this signer's fragment over `msg`.
pub fn partial_sign(msg: &[u8], share: &KeyShare, params: &SchemeParams) -> PartialSignature {
    let digest = message_digest(msg);
    let scalar = scalar_from_digest(&digest, &params.q);
    PartialSignature { signer: share.index, sigma: &share.secret * scalar % &params.q, digest }
}

/// Checks one fragment: the digest must belong to `msg` and the scalar must
/// satisfy `g^sigma = public_share^scalar(digest) mod p`.
pub fn verify_partial(
    msg: &[u8],
    psig: &PartialSignature,
    share_public: &BigUint,
    params: &SchemeParams,
) -> bool {
    psig.digest == message_digest(msg) && fragment_equation_holds(psig, share_public, params)
}

/// The exponent-equation half of fragment verification, reusable when the
/// original message is known only through its digest (committee replay).
pub fn fragment_equation_holds(
    psig: &PartialSignature,
    share_public: &BigUint,
    params: &SchemeParams,
) -> bool {
    let scalar = scalar_from_digest(&psig.digest, &params.q);
    params.g.modpow(&psig.sigma, &params.p) == share_public.modpow(&scalar, &params.p)
}

/// Lagrange basis coefficients at zero for the given 1-based points, mod q.
/// `lambda_i = prod_{j != i} x_j / (x_j - x_i)`.
fn lagrange_at_zero(points: &[u32], q: &BigUint) -> Vec<BigUint> {
    // Indices are tiny, so i64 arithmetic cannot overflow before reduction.
    let to_residue = |v: i64| -> BigUint {
        if v >= 0 {
            BigUint::from(v as u64) % q
        } else {
            (q - BigUint::from(v.unsigned_abs()) % q) % q
        }
    };
    points
        .iter()
        .map(|&xi| {
            let mut num = BigUint::one();
            let mut den = BigUint::one();
            for &xj in points {
                if xj == xi {
                    continue;
                }
                num = num * BigUint::from(xj) % q;
                den = den * to_residue(i64::from(xj) - i64::from(xi)) % q;
            }
            // q is prime, so the inverse is den^(q-2).
            let den_inv = den.modpow(&(q - 2u32), q);
            num * den_inv % q
        })
        .collect()
}

/// Recombines at least `threshold` fragments into the group signature.
///
/// Every supplied fragment is checked against its public share; when more
/// than `threshold` verify, the lowest signer indices are interpolated. The
/// fragments must all cover the same digest and come from distinct signers.
pub fn aggregate(
    psigs: &[PartialSignature],
    share_publics: &[SharePublic],
    params: &SchemeParams,
) -> Result<GroupSignature, ThresholdError> {
    let first = psigs.first().ok_or(ThresholdError::ThresholdNotMet {
        got: 0,
        need: params.threshold,
    })?;
    let mut seen = std::collections::BTreeMap::new();
    for psig in psigs {
        if psig.digest != first.digest {
            return Err(ThresholdError::MixedDigests { index: psig.signer });
        }
        if seen.insert(psig.signer, psig).is_some() {
            return Err(ThresholdError::DuplicateSigner { index: psig.signer });
        }
    }
    if seen.len() < params.threshold {
        return Err(ThresholdError::ThresholdNotMet { got: seen.len(), need: params.threshold });
    }
    for psig in seen.values() {
        let public = share_publics
            .iter()
            .find(|sp| sp.index == psig.signer)
            .ok_or(ThresholdError::UnknownSigner { index: psig.signer })?;
        if !fragment_equation_holds(psig, &public.key, params) {
            return Err(ThresholdError::InvalidFragment { index: psig.signer });
        }
    }
    // BTreeMap iteration gives ascending signer indices; take the lowest t.
    let chosen: Vec<&PartialSignature> = seen.values().take(params.threshold).copied().collect();
    let points: Vec<u32> = chosen.iter().map(|p| p.signer).collect();
    let lambdas = lagrange_at_zero(&points, &params.q);
    let sigma = chosen
        .iter()
        .zip(&lambdas)
        .fold(BigUint::zero(), |acc, (psig, lambda)| (acc + &psig.sigma * lambda) % &params.q);
    Ok(GroupSignature { sigma, digest: first.digest })
}

/// Checks a recombined signature: the digest must belong to `msg` and
/// `g^sigma = group_key^scalar(digest) mod p` must hold.
pub fn verify(
    msg: &[u8],
    group_key: &GroupKey,
    sig: &GroupSignature,
    params: &SchemeParams,
) -> bool {
    if sig.digest != message_digest(msg) {
        return false;
    }
    let scalar = scalar_from_digest(&sig.digest, &params.q);
    params.g.modpow(&sig.sigma, &params.p) == group_key.0.modpow(&scalar, &params.p)
}

/// Deterministically derives a single-signer keypair for a committee member.
pub fn leader_keygen(params: &SchemeParams, seed: u64) -> LeaderKeypair {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let secret = random_scalar(&params.q, &mut rng);
    let public = params.g.modpow(&secret, &params.p);
    LeaderKeypair { secret, public }
}

/// Signs a payload with a single-signer key.
pub fn leader_sign(msg: &[u8], key: &LeaderKeypair, params: &SchemeParams) -> LeaderSignature {
    let digest = message_digest(msg);
    let scalar = scalar_from_digest(&digest, &params.q);
    LeaderSignature { sigma: &key.secret * scalar % &params.q, digest }
}

/// Verifies a single-signer signature against the signer's public key.
pub fn leader_verify(
    msg: &[u8],
    sig: &LeaderSignature,
    public: &BigUint,
    params: &SchemeParams,
) -> bool {
    if sig.digest != message_digest(msg) {
        return false;
    }
    let scalar = scalar_from_digest(&sig.digest, &params.q);
    params.g.modpow(&sig.sigma, &params.p) == public.modpow(&scalar, &params.p)
}

impl PartialSignature {
    pub fn encode_into(&self, w: &mut Writer) {
        let mut inner = Writer::new();
        inner
            .put_uint(tag::UINT, u64::from(self.signer))
            .put_big(tag::BIG, &self.sigma)
            .put_bytes(tag::BYTES, &self.digest);
        w.put_nested(tag::PARTIAL_SIG, &inner.finish());
    }

    pub fn decode_from(r: &mut Reader) -> Result<Self, WireError> {
        let inner = r.take(tag::PARTIAL_SIG)?;
        let mut ir = Reader::new(inner);
        let signer = u32::try_from(ir.take_uint(tag::UINT)?)
            .map_err(|_| WireError::IntTooWide { len: 8 })?;
        let sigma = ir.take_big(tag::BIG)?;
        let digest = ir.take_array::<32>(tag::BYTES)?;
        ir.expect_end()?;
        Ok(Self { signer, sigma, digest })
    }
}

impl GroupSignature {
    pub fn encode_into(&self, w: &mut Writer) {
        let mut inner = Writer::new();
        inner.put_big(tag::BIG, &self.sigma).put_bytes(tag::BYTES, &self.digest);
        w.put_nested(tag::GROUP_SIG, &inner.finish());
    }

    pub fn decode_from(r: &mut Reader) -> Result<Self, WireError> {
        let inner = r.take(tag::GROUP_SIG)?;
        let mut ir = Reader::new(inner);
        let sigma = ir.take_big(tag::BIG)?;
        let digest = ir.take_array::<32>(tag::BYTES)?;
        ir.expect_end()?;
        Ok(Self { sigma, digest })
    }
}

impl LeaderSignature {
    pub fn encode_into(&self, w: &mut Writer) {
        let mut inner = Writer::new();
        inner.put_big(tag::BIG, &self.sigma).put_bytes(tag::BYTES, &self.digest);
        w.put_nested(tag::LEADER_SIG, &inner.finish());
    }

    pub fn decode_from(r: &mut Reader) -> Result<Self, WireError> {
        let inner = r.take(tag::LEADER_SIG)?;
        let mut ir = Reader::new(inner);
        let sigma = ir.take_big(tag::BIG)?;
        let digest = ir.take_array::<32>(tag::BYTES)?;
        ir.expect_end()?;
        Ok(Self { sigma, digest })
    }
}

impl SharePublic {
    pub fn encode_into(&self, w: &mut Writer) {
        let mut inner = Writer::new();
        inner.put_uint(tag::UINT, u64::from(self.index)).put_big(tag::BIG, &self.key);
        w.put_nested(tag::SHARE_PUBKEY, &inner.finish());
    }

    pub fn decode_from(r: &mut Reader) -> Result<Self, WireError> {
        let inner = r.take(tag::SHARE_PUBKEY)?;
        let mut ir = Reader::new(inner);
        let index = u32::try_from(ir.take_uint(tag::UINT)?)
            .map_err(|_| WireError::IntTooWide { len: 8 })?;
        let key = ir.take_big(tag::BIG)?;
        ir.expect_end()?;
        Ok(Self { index, key })
    }
}

impl GroupKey {
    pub fn encode_into(&self, w: &mut Writer) {
        let mut inner = Writer::new();
        inner.put_big(tag::BIG, &self.0);
        w.put_nested(tag::GROUP_KEY, &inner.finish());
    }

    pub fn decode_from(r: &mut Reader) -> Result<Self, WireError> {
        let inner = r.take(tag::GROUP_KEY)?;
        let mut ir = Reader::new(inner);
        let key = ir.take_big(tag::BIG)?;
        ir.expect_end()?;
        Ok(Self(key))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(t: usize, n: usize) -> SchemeParams {
        SchemeParams::tiny(t, n).unwrap()
    }

    /// Brute-force discrete log in the tiny group: the only oracle that can
    /// independently confirm what the dealer committed to.
    fn brute_force_dlp(target: &BigUint, params: &SchemeParams) -> Option<u64> {
        let q: u64 = u64::try_from(params.q.clone()).unwrap();
        (0..q).find(|&e| params.g.modpow(&BigUint::from(e), &params.p) == *target)
    }

    #[test]
    fn params_validation_rejects_bad_structure() {
        assert_eq!(
            SchemeParams::new(
                BigUint::from(467u32),
                BigUint::from(233u32),
                BigUint::from(4u32),
                4,
                3
            )
            .unwrap_err(),
            ThresholdError::BadThreshold { threshold: 4, members: 3 }
        );
        // 229 does not divide 466.
        assert_eq!(
            SchemeParams::new(
                BigUint::from(467u32),
                BigUint::from(229u32),
                BigUint::from(4u32),
                2,
                3
            )
            .unwrap_err(),
            ThresholdError::BadSubgroupOrder
        );
        // 466 = 2 * 233, so an element of order 466 (a non-residue) fails g^q = 1.
        assert_eq!(
            SchemeParams::new(
                BigUint::from(467u32),
                BigUint::from(233u32),
                BigUint::from(2u32),
                2,
                3
            )
            .unwrap_err(),
            ThresholdError::BadGenerator
        );
    }

    #[test]
    fn dealer_is_deterministic_and_shares_lie_on_polynomial() {
        let params = tiny(3, 5);
        let a = generate(&params, 99);
        let b = generate(&params, 99);
        assert_eq!(a, b);
        let c = generate(&params, 100);
        assert_ne!(a.group_key, c.group_key);
        for share in &a.shares {
            assert_eq!(share.public, params.g.modpow(&share.secret, &params.p));
        }
        assert_eq!(a.shares.len(), 5);
    }

    /// The group key hides exactly the dealt secret: brute-forcing the
    /// discrete log of pk in the tiny group recovers `group_secret`.
    #[test]
    fn tiny_group_key_matches_brute_forced_secret() {
        let params = tiny(2, 3);
        for seed in 0..20 {
            let keys = generate(&params, seed);
            let recovered = brute_force_dlp(&keys.group_key.0, &params).unwrap();
            assert_eq!(BigUint::from(recovered), keys.group_secret % &params.q);
        }
    }

    /// A fragment leaks its share: sigma_i * scalar^-1 = sk_i mod q. This is
    /// the documented reason key sets are one-shot.
    #[test]
    fn fragment_reveals_share_hence_one_time_keys() {
        let params = tiny(2, 3);
        let keys = generate(&params, 7);
        let msg = b"epoch:41";
        let psig = partial_sign(msg, &keys.shares[1], &params);
        let scalar = scalar_from_digest(&psig.digest, &params.q);
        let inv = scalar.modpow(&(&params.q - 2u32), &params.q);
        assert_eq!(psig.sigma * inv % &params.q, &keys.shares[1].secret % &params.q);
    }

    #[test]
    fn zero_share_signs_zero() {
        let params = tiny(2, 3);
        let share = KeyShare { index: 1, secret: BigUint::zero(), public: BigUint::one() };
        let psig = partial_sign(b"anything", &share, &params);
        assert!(psig.sigma.is_zero());
        assert!(verify_partial(b"anything", &psig, &share.public, &params));
    }

    #[test]
    fn lagrange_coefficients_match_hand_computation() {
        // For points {1, 2, 3} mod 233: lambda = (3, -3, 1) = (3, 230, 1).
        let q = BigUint::from(233u32);
        let lambdas = lagrange_at_zero(&[1, 2, 3], &q);
        assert_eq!(
            lambdas,
            vec![BigUint::from(3u32), BigUint::from(230u32), BigUint::from(1u32)]
        );
        // The coefficients interpolate the constant polynomial 1 at zero.
        let sum = lambdas.into_iter().fold(BigUint::zero(), |a, l| (a + l) % &q);
        assert_eq!(sum, BigUint::one());
    }

    #[test]
    fn lagrange_handles_large_q_without_signed_overflow() {
        let params = SchemeParams::default_256(2, 3).unwrap();
        let lambdas = lagrange_at_zero(&[2, 5], &params.q);
        // lambda_1 = 5/(5-2) = 5 * inv(3); lambda_2 = 2/(2-5) = 2 * inv(-3).
        let three_inv = BigUint::from(3u32).modpow(&(&params.q - 2u32), &params.q);
        assert_eq!(lambdas[0], BigUint::from(5u32) * &three_inv % &params.q);
        let minus_three = &params.q - 3u32;
        let m3_inv = minus_three.modpow(&(&params.q - 2u32), &params.q);
        assert_eq!(lambdas[1], BigUint::from(2u32) * m3_inv % &params.q);
    }

    #[test]
    fn sign_aggregate_verify_round_trip_on_both_profiles() {
        for params in [tiny(3, 5), SchemeParams::default_256(3, 5).unwrap()] {
            let keys = generate(&params, 1234);
            let publics = keys.share_publics();
            let msg = b"source:d0 epoch:17";
            let psigs: Vec<_> =
                keys.shares.iter().map(|s| partial_sign(msg, s, &params)).collect();
            for (psig, share) in psigs.iter().zip(&keys.shares) {
                assert!(verify_partial(msg, psig, &share.public, &params));
            }
            let sig = aggregate(&psigs[..3], &publics, &params).unwrap();
            assert!(verify(msg, &keys.group_key, &sig, &params));
            // Interpolation lands exactly on f(0) * scalar.
            let scalar = scalar_from_digest(&message_digest(msg), &params.q);
            assert_eq!(sig.sigma, keys.group_secret * scalar % &params.q);
        }
    }

    /// The recombined sigma must not depend on which valid subset was used.
    #[test]
    fn aggregation_is_subset_independent() {
        let params = tiny(3, 5);
        let keys = generate(&params, 5);
        let publics = keys.share_publics();
        let msg = b"subset independence";
        let psigs: Vec<_> = keys.shares.iter().map(|s| partial_sign(msg, s, &params)).collect();
        let reference = aggregate(&psigs[..3], &publics, &params).unwrap();
        for a in 0..5 {
            for b in (a + 1)..5 {
                for c in (b + 1)..5 {
                    let subset =
                        vec![psigs[a].clone(), psigs[b].clone(), psigs[c].clone()];
                    let sig = aggregate(&subset, &publics, &params).unwrap();
                    assert_eq!(sig, reference);
                }
            }
        }
    }

    #[test]
    fn aggregate_error_contract() {
        let params = tiny(3, 5);
        let keys = generate(&params, 11);
        let publics = keys.share_publics();
        let msg = b"errors";
        let psigs: Vec<_> = keys.shares.iter().map(|s| partial_sign(msg, s, &params)).collect();

        assert_eq!(
            aggregate(&psigs[..2], &publics, &params).unwrap_err(),
            ThresholdError::ThresholdNotMet { got: 2, need: 3 }
        );
        assert_eq!(
            aggregate(&[], &publics, &params).unwrap_err(),
            ThresholdError::ThresholdNotMet { got: 0, need: 3 }
        );

        let dup = vec![psigs[0].clone(), psigs[1].clone(), psigs[0].clone()];
        assert_eq!(
            aggregate(&dup, &publics, &params).unwrap_err(),
            ThresholdError::DuplicateSigner { index: 1 }
        );

        let mut corrupted = psigs[..3].to_vec();
        corrupted[1].sigma = (&corrupted[1].sigma + 1u32) % &params.q;
        assert_eq!(
            aggregate(&corrupted, &publics, &params).unwrap_err(),
            ThresholdError::InvalidFragment { index: 2 }
        );

        let mut mixed = psigs[..3].to_vec();
        mixed[2] = partial_sign(b"another message", &keys.shares[2], &params);
        assert_eq!(
            aggregate(&mixed, &publics, &params).unwrap_err(),
            ThresholdError::MixedDigests { index: 3 }
        );
    }

    #[test]
    fn verify_rejects_tampering() {
        let params = tiny(3, 5);
        let keys = generate(&params, 21);
        let publics = keys.share_publics();
        let msg = b"tamper target";
        let psigs: Vec<_> = keys.shares.iter().map(|s| partial_sign(msg, s, &params)).collect();
        let sig = aggregate(&psigs[..3], &publics, &params).unwrap();

        let mut bumped = sig.clone();
        bumped.sigma = (&bumped.sigma + 1u32) % &params.q;
        assert!(!verify(msg, &keys.group_key, &bumped, &params));

        let mut altered = msg.to_vec();
        altered[0] ^= 0x01;
        assert!(!verify(&altered, &keys.group_key, &sig, &params));

        let mut psig_bumped = psigs[0].clone();
        psig_bumped.sigma = (&psig_bumped.sigma + 1u32) % &params.q;
        assert!(!verify_partial(msg, &psig_bumped, &keys.shares[0].public, &params));
    }

    /// Signatures from one dealing never verify under an unrelated group key.
    /// Runs on the 256-bit profile, where a colliding group secret across two
    /// independent dealings is impossible in practice.
    #[test]
    fn verify_rejects_foreign_group_keys_across_seeded_runs() {
        let params = SchemeParams::default_256(2, 3).unwrap();
        let msg = b"cross-key check";
        for seed in 0..1000u64 {
            let keys = generate(&params, seed);
            let other = generate(&params, seed + 1_000_000);
            let publics = keys.share_publics();
            let psigs: Vec<_> =
                keys.shares[..2].iter().map(|s| partial_sign(msg, s, &params)).collect();
            let sig = aggregate(&psigs, &publics, &params).unwrap();
            assert!(verify(msg, &keys.group_key, &sig, &params));
            assert!(!verify(msg, &other.group_key, &sig, &params));
        }
    }

    /// Group-key consistency: pk equals the Lagrange recombination of the
    /// public shares in the exponent, for every t-subset.
    #[test]
    fn group_key_matches_share_publics_in_exponent() {
        let params = tiny(2, 4);
        let keys = generate(&params, 3);
        for a in 0..4u32 {
            for b in (a + 1)..4 {
                let points = [a + 1, b + 1];
                let lambdas = lagrange_at_zero(&points, &params.q);
                let recombined = points
                    .iter()
                    .zip(&lambdas)
                    .map(|(&i, l)| keys.shares[(i - 1) as usize].public.modpow(l, &params.p))
                    .fold(BigUint::one(), |acc, v| acc * v % &params.p);
                assert_eq!(recombined, keys.group_key.0);
            }
        }
    }

    /// Exercises the zero-residue escape: find a message whose SHA-256 is
    /// divisible by 233, then check signing still round-trips with a nonzero
    /// scalar.
    #[test]
    fn zero_digest_residue_is_escaped() {
        let params = tiny(2, 3);
        let msg = (0u32..)
            .map(|i| format!("zero residue probe {i}"))
            .find(|m| {
                (BigUint::from_bytes_be(&message_digest(m.as_bytes())) % &params.q).is_zero()
            })
            .expect("a residue-zero message exists well within u32 probes");
        let scalar = scalar_from_digest(&message_digest(msg.as_bytes()), &params.q);
        assert!(!scalar.is_zero());

        let keys = generate(&params, 17);
        let publics = keys.share_publics();
        let psigs: Vec<_> =
            keys.shares.iter().map(|s| partial_sign(msg.as_bytes(), s, &params)).collect();
        let sig = aggregate(&psigs[..2], &publics, &params).unwrap();
        assert!(verify(msg.as_bytes(), &keys.group_key, &sig, &params));
    }

    #[test]
    fn leader_signatures_round_trip_and_reject_tampering() {
        let params = SchemeParams::default_256(1, 1).unwrap();
        let keypair = leader_keygen(&params, 404);
        let payload = b"package bytes";
        let sig = leader_sign(payload, &keypair, &params);
        assert!(leader_verify(payload, &sig, &keypair.public, &params));
        assert!(!leader_verify(b"package bytez", &sig, &keypair.public, &params));
        let other = leader_keygen(&params, 405);
        assert!(!leader_verify(payload, &sig, &other.public, &params));
    }

    #[test]
    fn wire_round_trips() {
        let params = tiny(2, 3);
        let keys = generate(&params, 8);
        let psig = partial_sign(b"wire", &keys.shares[0], &params);
        let publics = keys.share_publics();
        let sig = aggregate(
            &[psig.clone(), partial_sign(b"wire", &keys.shares[1], &params)],
            &publics,
            &params,
        )
        .unwrap();

        let mut w = Writer::new();
        psig.encode_into(&mut w);
        sig.encode_into(&mut w);
        publics[0].encode_into(&mut w);
        keys.group_key.encode_into(&mut w);
        let bytes = w.finish();

        let mut r = Reader::new(&bytes);
        assert_eq!(PartialSignature::decode_from(&mut r).unwrap(), psig);
        assert_eq!(GroupSignature::decode_from(&mut r).unwrap(), sig);
        assert_eq!(SharePublic::decode_from(&mut r).unwrap(), publics[0]);
        assert_eq!(GroupKey::decode_from(&mut r).unwrap(), keys.group_key);
        r.expect_end().unwrap();
    }

    /// Fixed-base + random-round Miller-Rabin over the shipped profiles. Not
    /// a primality proof, but enough to catch a corrupted constant.
    #[test]
    fn shipped_groups_are_structurally_sound() {
        fn miller_rabin(n: &BigUint, rounds: u32) -> bool {
            use num_traits::ToPrimitive;
            if n < &BigUint::from(4u32) {
                return n.to_u32().map(|v| v == 2 || v == 3).unwrap_or(false);
            }
            if (n % 2u32).is_zero() {
                return false;
            }
            let n_minus_1 = n - 1u32;
            let s = n_minus_1.trailing_zeros().unwrap();
            let d = &n_minus_1 >> s;
            let mut rng = ChaCha20Rng::seed_from_u64(2026);
            let fixed = [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
            let bases = fixed
                .into_iter()
                .map(BigUint::from)
                .chain((0..rounds).map(|_| {
                    BigUint::from(2u32) + random_scalar(&(n - 4u32), &mut rng)
                }));
            'base: for a in bases {
                let mut x = a.modpow(&d, n);
                if x == BigUint::one() || x == n_minus_1 {
                    continue;
                }
                for _ in 0..s - 1 {
                    x = &x * &x % n;
                    if x == n_minus_1 {
                        continue 'base;
                    }
                }
                return false;
            }
            true
        }

        for params in [tiny(1, 1), SchemeParams::default_256(1, 1).unwrap()] {
            assert!(miller_rabin(&params.p, 24), "p failed primality rounds");
            assert!(miller_rabin(&params.q, 24), "q failed primality rounds");
            assert_eq!(&params.p, &(&params.q * 2u32 + 1u32), "shipped groups are safe-prime");
            assert_eq!(params.g.modpow(&params.q, &params.p), BigUint::one());
        }
        assert_eq!(SchemeParams::default_256(1, 1).unwrap().security_bits, 256);
        assert_eq!(tiny(1, 1).security_bits, 8);
    }
}
