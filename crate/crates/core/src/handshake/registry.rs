use std::collections::HashMap;
use std::sync::{Arc, Mutex, MutexGuard};

use serde::{Deserialize, Serialize};
use zeroize::Zeroizing;

use super::fields::{BaseCreation, BlockEntry, Policies};
use crate::attest::Identity;
use crate::crypto::{ProtocolRng, SequenceCounter, SessionKeys};

pub type BaseId = [u8; 16];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaseState {
    Allocated,
    Active,
    Expired,
    Terminated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TerminationMethod {
    /// Wipe and return the instance to the reuse pool.
    Cleanup,
    /// Wipe and remove for good.
    Destroy,
    /// Stay resident; the instance becomes joinable by `shared` creation.
    Keep,
}

impl TerminationMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            TerminationMethod::Cleanup => "cleanup",
            TerminationMethod::Destroy => "destroy",
            TerminationMethod::Keep => "keep",
        }
    }

    pub fn from_token(t: &str) -> Option<Self> {
        match t {
            "cleanup" => Some(TerminationMethod::Cleanup),
            "destroy" => Some(TerminationMethod::Destroy),
            "keep" => Some(TerminationMethod::Keep),
            _ => None,
        }
    }
}

/// Per-client server-side session resource.
pub struct AttestBase {
    pub base_id: BaseId,
    pub state: BaseState,
    pub keys: SessionKeys,
    pub policies: Policies,
    pub created_at: u64,
    pub expires_at: u64,
    pub recv_counter: SequenceCounter,
    pub send_counter: SequenceCounter,
    pub secret_store: Vec<Zeroizing<Vec<u8>>>,
    pub reusable: bool,
    pub instance: u64,
    pub identity: Identity,
}

impl AttestBase {
    pub fn is_live(&self) -> bool {
        matches!(self.state, BaseState::Allocated | BaseState::Active)
    }

    fn wipe(&mut self) {
        self.secret_store.clear();
        self.recv_counter.reset();
        self.send_counter.reset();
    }
}

impl std::fmt::Debug for AttestBase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AttestBase")
            .field("base_id", &crate::wire::b64_encode(&self.base_id))
            .field("state", &self.state)
            .field("instance", &self.instance)
            .field("secrets", &self.secret_store.len())
            .finish_non_exhaustive()
    }
}

pub type BaseHandle = Arc<Mutex<AttestBase>>;

pub fn lock(base: &BaseHandle) -> MutexGuard<'_, AttestBase> {
    base.lock().unwrap_or_else(|p| p.into_inner())
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RegistryError {
    #[error("no qualifying instance available")]
    ResourceExhausted,
    #[error("unknown base")]
    UnknownBase,
    #[error("base expired")]
    Expired,
    #[error("base already terminated")]
    AlreadyTerminated,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Instance {
    identity: Identity,
    shareable: bool,
    members: usize,
}

/// Snapshot for tests and scenario assertions.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RegistryStats {
    pub live_bases: usize,
    pub tombstones: usize,
    pub pool_size: usize,
    pub instances: usize,
    pub shareable_instances: usize,
}

pub struct AllocationRequest<'a> {
    pub creation: BaseCreation,
    pub blocklist: &'a [BlockEntry],
    pub keys: SessionKeys,
    pub policies: Policies,
    pub now: u64,
    pub max_age: u64,
}

#[derive(Default)]
struct Inner {
    bases: HashMap<BaseId, BaseHandle>,
    instances: HashMap<u64, Instance>,
    pool: Vec<u64>,
    next_instance: u64,
}

/// Live attest bases and the instances behind them.
pub struct Registry {
    inner: Mutex<Inner>,
    template: Identity,
    max_instances: usize,
    rng: ProtocolRng,
}

fn blocked(identity: &Identity, blocklist: &[BlockEntry]) -> bool {
    blocklist.iter().any(|b| match b {
        BlockEntry::Measurement(m) => *m == identity.measurement,
        BlockEntry::Id(t) => *t == identity.tee_id || *t == identity.isv_id,
    })
}

impl Registry {
    /// Instances are stamped from `template`, with the TEE id suffixed by a
    /// per-instance counter.
    pub fn new(template: Identity, max_instances: usize, rng: ProtocolRng) -> Self {
        Registry {
            inner: Mutex::new(Inner::default()),
            template,
            max_instances,
            rng,
        }
    }

    fn inner(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn fresh_instance(&self, inner: &mut Inner, blocklist: &[BlockEntry]) -> Option<u64> {
        if inner.instances.len() >= self.max_instances {
            return None;
        }
        let id = inner.next_instance + 1;
        let mut identity = self.template.clone();
        identity.tee_id = format!("{}-{id:04}", self.template.tee_id);
        if blocked(&identity, blocklist) {
            return None;
        }
        inner.next_instance = id;
        inner.instances.insert(
            id,
            Instance {
                identity,
                shareable: false,
                members: 0,
            },
        );
        Some(id)
    }

    pub fn allocate_base(&self, req: AllocationRequest<'_>) -> Result<BaseHandle, RegistryError> {
        let mut inner = self.inner();
        let pick_pooled = |inner: &mut Inner| {
            let pos = inner
                .pool
                .iter()
                .position(|i| !blocked(&inner.instances[i].identity, req.blocklist))?;
            Some(inner.pool.remove(pos))
        };
        let pick_shared = |inner: &Inner| {
            let mut ids: Vec<u64> = inner
                .instances
                .iter()
                .filter(|(_, i)| i.shareable && !blocked(&i.identity, req.blocklist))
                .map(|(id, _)| *id)
                .collect();
            ids.sort_unstable();
            ids.first().copied()
        };
        let instance = match req.creation {
            BaseCreation::New => self.fresh_instance(&mut inner, req.blocklist),
            BaseCreation::Reuse => {
                pick_pooled(&mut inner).or_else(|| self.fresh_instance(&mut inner, req.blocklist))
            }
            BaseCreation::Shared => {
                pick_shared(&inner).or_else(|| self.fresh_instance(&mut inner, req.blocklist))
            }
        }
        .ok_or(RegistryError::ResourceExhausted)?;

        let base_id = loop {
            let id: BaseId = self.rng.array();
            if !inner.bases.contains_key(&id) {
                break id;
            }
        };
        let inst = inner.instances.get_mut(&instance).expect("picked instance exists");
        inst.members += 1;
        let base = AttestBase {
            base_id,
            state: BaseState::Allocated,
            keys: req.keys,
            policies: req.policies,
            created_at: req.now,
            expires_at: req.now.saturating_add(req.max_age),
            recv_counter: SequenceCounter::new(),
            send_counter: SequenceCounter::new(),
            secret_store: Vec::new(),
            reusable: req.creation == BaseCreation::Reuse,
            instance,
            identity: inst.identity.clone(),
        };
        let handle = Arc::new(Mutex::new(base));
        inner.bases.insert(base_id, handle.clone());
        Ok(handle)
    }

    /// Undoes an allocation whose handshake did not complete.
    pub fn release(&self, base_id: &BaseId) {
        let mut inner = self.inner();
        if let Some(h) = inner.bases.remove(base_id) {
            let instance = lock(&h).instance;
            Self::leave(&mut inner, instance, TerminationMethod::Destroy);
        }
    }

    /// Live base for `base_id`; expiry is applied here.
    pub fn lookup(&self, base_id: &[u8], now: u64) -> Result<BaseHandle, RegistryError> {
        let id: BaseId = base_id.try_into().map_err(|_| RegistryError::UnknownBase)?;
        let handle = self
            .inner()
            .bases
            .get(&id)
            .cloned()
            .ok_or(RegistryError::UnknownBase)?;
        let mut base = lock(&handle);
        if base.is_live() && now >= base.expires_at {
            base.state = BaseState::Expired;
            base.wipe();
        }
        match base.state {
            BaseState::Active => Ok(handle.clone()),
            BaseState::Allocated => Err(RegistryError::UnknownBase),
            BaseState::Expired => Err(RegistryError::Expired),
            BaseState::Terminated => Err(RegistryError::AlreadyTerminated),
        }
    }

    fn leave(inner: &mut Inner, instance: u64, method: TerminationMethod) {
        let Some(inst) = inner.instances.get_mut(&instance) else {
            return;
        };
        inst.members = inst.members.saturating_sub(1);
        if inst.members > 0 {
            return;
        }
        match method {
            TerminationMethod::Cleanup => {
                inst.shareable = false;
                inner.pool.push(instance);
            }
            TerminationMethod::Destroy => {
                inner.instances.remove(&instance);
                inner.pool.retain(|i| *i != instance);
            }
            TerminationMethod::Keep => {}
        }
    }

    pub fn terminate(&self, base_id: &[u8], method: TerminationMethod) -> Result<(), RegistryError> {
        let id: BaseId = base_id.try_into().map_err(|_| RegistryError::UnknownBase)?;
        let mut inner = self.inner();
        let handle = inner.bases.get(&id).cloned().ok_or(RegistryError::UnknownBase)?;
        let mut base = lock(&handle);
        if base.state == BaseState::Terminated {
            return Err(RegistryError::AlreadyTerminated);
        }
        let instance = base.instance;
        match method {
            TerminationMethod::Keep => {
                if let Some(inst) = inner.instances.get_mut(&instance) {
                    inst.shareable = true;
                }
                log::warn!(
                    "base {} kept resident and shareable; residual state may outlive the client",
                    crate::wire::b64_encode(&id)
                );
            }
            TerminationMethod::Cleanup => {
                base.state = BaseState::Terminated;
                base.wipe();
                drop(base);
                Self::leave(&mut inner, instance, method);
            }
            TerminationMethod::Destroy => {
                base.state = BaseState::Terminated;
                base.wipe();
                drop(base);
                inner.bases.remove(&id);
                Self::leave(&mut inner, instance, method);
            }
        }
        Ok(())
    }

    pub fn stats(&self) -> RegistryStats {
        let inner = self.inner();
        let mut s = RegistryStats {
            pool_size: inner.pool.len(),
            instances: inner.instances.len(),
            shareable_instances: inner.instances.values().filter(|i| i.shareable).count(),
            ..Default::default()
        };
        for h in inner.bases.values() {
            if lock(h).is_live() {
                s.live_bases += 1;
            } else {
                s.tombstones += 1;
            }
        }
        s
    }

    /// State of a base, or `None` once it has been destroyed.
    pub fn base_state(&self, base_id: &[u8]) -> Option<BaseState> {
        let id: BaseId = base_id.try_into().ok()?;
        let h = self.inner().bases.get(&id).cloned()?;
        let s = lock(&h).state;
        Some(s)
    }

    pub fn instance_of(&self, base_id: &[u8]) -> Option<u64> {
        let id: BaseId = base_id.try_into().ok()?;
        let h = self.inner().bases.get(&id).cloned()?;
        let i = lock(&h).instance;
        Some(i)
    }

    pub fn secret_count(&self, base_id: &[u8]) -> Option<usize> {
        let id: BaseId = base_id.try_into().ok()?;
        let h = self.inner().bases.get(&id).cloned()?;
        let n = lock(&h).secret_store.len();
        Some(n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{derive_key_schedule, CipherSuite, RandomNonce};

    fn keys() -> SessionKeys {
        let r = RandomNonce::from_slice(&[1; 32]).unwrap();
        derive_key_schedule(CipherSuite::Aes128GcmSha256, &[2; 32], &r, &r, &[0; 32])
    }

    fn registry(cap: usize) -> Registry {
        Registry::new(
            Identity::for_code("svc", "acme", "tee", 1),
            cap,
            ProtocolRng::seeded(3),
        )
    }

    fn alloc(r: &Registry, creation: BaseCreation, blocklist: &[BlockEntry]) -> Result<BaseHandle, RegistryError> {
        let h = r.allocate_base(AllocationRequest {
            creation,
            blocklist,
            keys: keys(),
            policies: Policies::default(),
            now: 100,
            max_age: 50,
        })?;
        lock(&h).state = BaseState::Active;
        Ok(h)
    }

    fn id(h: &BaseHandle) -> BaseId {
        lock(h).base_id
    }

    #[test]
    fn new_bases_are_distinct() {
        let r = registry(8);
        let a = alloc(&r, BaseCreation::New, &[]).unwrap();
        let b = alloc(&r, BaseCreation::New, &[]).unwrap();
        assert_ne!(id(&a), id(&b));
        assert_ne!(lock(&a).instance, lock(&b).instance);
        assert_eq!(r.stats().live_bases, 2);
    }

    #[test]
    fn reuse_with_empty_pool_falls_back_to_new() {
        let r = registry(8);
        let a = alloc(&r, BaseCreation::Reuse, &[]).unwrap();
        assert_eq!(r.stats().instances, 1);
        assert_eq!(r.stats().pool_size, 0);
        assert!(lock(&a).reusable);
    }

    #[test]
    fn cleanup_then_reuse() {
        let r = registry(8);
        let a = alloc(&r, BaseCreation::New, &[]).unwrap();
        lock(&a).secret_store.push(Zeroizing::new(b"s".to_vec()));
        let inst = lock(&a).instance;
        r.terminate(&id(&a), TerminationMethod::Cleanup).unwrap();
        assert_eq!(r.stats().pool_size, 1);
        assert_eq!(r.base_state(&id(&a)), Some(BaseState::Terminated));
        assert_eq!(r.secret_count(&id(&a)), Some(0));
        assert_eq!(
            r.terminate(&id(&a), TerminationMethod::Cleanup),
            Err(RegistryError::AlreadyTerminated)
        );
        let b = alloc(&r, BaseCreation::Reuse, &[]).unwrap();
        assert_eq!(lock(&b).instance, inst);
        assert_ne!(id(&b), id(&a));
        assert!(lock(&b).secret_store.is_empty());
        assert_eq!(r.stats().pool_size, 0);
    }

    #[test]
    fn destroy_removes() {
        let r = registry(8);
        let a = alloc(&r, BaseCreation::New, &[]).unwrap();
        r.terminate(&id(&a), TerminationMethod::Destroy).unwrap();
        assert_eq!(r.base_state(&id(&a)), None);
        assert_eq!(r.stats(), RegistryStats::default());
        assert_eq!(lock(&a).state, BaseState::Terminated);
    }

    #[test]
    fn keep_allows_sharing() {
        let r = registry(8);
        let a = alloc(&r, BaseCreation::New, &[]).unwrap();
        r.terminate(&id(&a), TerminationMethod::Keep).unwrap();
        assert_eq!(r.base_state(&id(&a)), Some(BaseState::Active));
        let b = alloc(&r, BaseCreation::Shared, &[]).unwrap();
        assert_eq!(lock(&a).instance, lock(&b).instance);
        assert_ne!(id(&a), id(&b));
        // separate secret namespaces
        lock(&a).secret_store.push(Zeroizing::new(b"alice".to_vec()));
        assert!(lock(&b).secret_store.is_empty());
    }

    #[test]
    fn shared_without_candidates_is_new() {
        let r = registry(8);
        let a = alloc(&r, BaseCreation::New, &[]).unwrap();
        let b = alloc(&r, BaseCreation::Shared, &[]).unwrap();
        assert_ne!(lock(&a).instance, lock(&b).instance);
    }

    #[test]
    fn blocklist_and_cap() {
        let r = registry(1);
        let m = crate::attest::measurement_of("svc");
        assert_eq!(
            alloc(&r, BaseCreation::New, &[BlockEntry::Measurement(m)]).err(),
            Some(RegistryError::ResourceExhausted)
        );
        assert_eq!(
            alloc(&r, BaseCreation::New, &[BlockEntry::Id("acme".into())]).err(),
            Some(RegistryError::ResourceExhausted)
        );
        assert_eq!(r.stats(), RegistryStats::default());
        alloc(&r, BaseCreation::New, &[]).unwrap();
        assert_eq!(
            alloc(&r, BaseCreation::New, &[]).err(),
            Some(RegistryError::ResourceExhausted)
        );
    }

    #[test]
    fn pooled_instance_respects_blocklist() {
        let r = registry(4);
        let a = alloc(&r, BaseCreation::New, &[]).unwrap();
        let tee = lock(&a).identity.tee_id.clone();
        r.terminate(&id(&a), TerminationMethod::Cleanup).unwrap();
        let b = alloc(&r, BaseCreation::Reuse, &[BlockEntry::Id(tee.clone())]).unwrap();
        assert_ne!(lock(&b).identity.tee_id, tee);
        assert_eq!(r.stats().pool_size, 1);
    }

    #[test]
    fn expiry_at_lookup() {
        let r = registry(4);
        let a = alloc(&r, BaseCreation::New, &[]).unwrap();
        assert!(r.lookup(&id(&a), 149).is_ok());
        assert_eq!(r.lookup(&id(&a), 150).err(), Some(RegistryError::Expired));
        assert_eq!(r.base_state(&id(&a)), Some(BaseState::Expired));
        assert_eq!(r.lookup(&[0; 16], 0).err(), Some(RegistryError::UnknownBase));
        assert_eq!(r.lookup(&[0; 3], 0).err(), Some(RegistryError::UnknownBase));
    }

    #[test]
    fn release_undoes_allocation() {
        let r = registry(4);
        let h = r
            .allocate_base(AllocationRequest {
                creation: BaseCreation::New,
                blocklist: &[],
                keys: keys(),
                policies: Policies::default(),
                now: 0,
                max_age: 10,
            })
            .unwrap();
        assert_eq!(r.lookup(&id(&h), 0).err(), Some(RegistryError::UnknownBase));
        r.release(&id(&h));
        assert_eq!(r.stats(), RegistryStats::default());
    }
}
