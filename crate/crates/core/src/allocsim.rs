//! Desk-scale datacenter model: hosts, VMs, cloudlets, two VM placement
//! policies, and a linear response-time model used to synthesize QoS
//! matrices.
//!
//! One VM and one cloudlet are created per service. A cloudlet runs on its
//! service's VM when that VM was placed; otherwise the broker binds it to the
//! placed VM with the fewest cloudlets so far, where it time-shares the VM.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{MetricOrientation, QoSMatrix, ServiceId, UserId};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Host {
    pub id: usize,
    pub mips: f64,
    pub ram: f64,
    pub bw: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VirtualMachine {
    pub id: usize,
    pub service: ServiceId,
    pub mips: f64,
    pub ram: f64,
    pub bw: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cloudlet {
    pub id: usize,
    pub service: ServiceId,
    /// Million instructions.
    pub length: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AllocPolicy {
    RoundRobin,
    BestFitDecreasing,
}

impl AllocPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            AllocPolicy::RoundRobin => "round-robin",
            AllocPolicy::BestFitDecreasing => "best-fit-decreasing",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocationPlan {
    pub hosts: Vec<Host>,
    pub vms: Vec<VirtualMachine>,
    /// Host index per VM index.
    pub vm_host: Vec<Option<usize>>,
    /// VM ids that fit on no host.
    pub unplaced: Vec<usize>,
    /// VM index per cloudlet index, filled by [`bind_cloudlets`].
    pub cloudlet_vm: Vec<Option<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Capacity {
    mips: f64,
    ram: f64,
    bw: f64,
}

impl Capacity {
    fn fits(&self, vm: &VirtualMachine) -> bool {
        vm.mips <= self.mips && vm.ram <= self.ram && vm.bw <= self.bw
    }

    fn take(&mut self, vm: &VirtualMachine) {
        self.mips -= vm.mips;
        self.ram -= vm.ram;
        self.bw -= vm.bw;
    }
}

fn validate(hosts: &[Host], vms: &[VirtualMachine]) -> Result<()> {
    if hosts.is_empty() || vms.is_empty() {
        return Err(Error::domain("allocation needs at least one host and one VM"));
    }
    for (k, h) in hosts.iter().enumerate() {
        if h.id != k {
            return Err(Error::domain(format!("host at position {k} has id {}", h.id)));
        }
        if !(h.mips > 0.0 && h.ram > 0.0 && h.bw > 0.0) {
            return Err(Error::domain(format!("host {k} has a non-positive capacity")));
        }
    }
    for (k, v) in vms.iter().enumerate() {
        if v.id != k {
            return Err(Error::domain(format!("VM at position {k} has id {}", v.id)));
        }
        if !(v.mips > 0.0 && v.ram > 0.0 && v.bw > 0.0) {
            return Err(Error::domain(format!("VM {k} has a non-positive request")));
        }
    }
    Ok(())
}

/// Places VMs on hosts.
///
/// Round-robin walks hosts cyclically from just after the previous
/// placement and takes the first one that fits. Best-fit-decreasing
/// visits VMs by requested MIPS (largest first, ties by id) and picks the
/// feasible host with the least MIPS left after placement (ties by host id).
/// VMs that fit nowhere are listed in `unplaced`; placing none is an error.
pub fn allocate(
    hosts: &[Host],
    vms: &[VirtualMachine],
    policy: AllocPolicy,
) -> Result<AllocationPlan> {
    validate(hosts, vms)?;
    let mut free: Vec<Capacity> = hosts
        .iter()
        .map(|h| Capacity {
            mips: h.mips,
            ram: h.ram,
            bw: h.bw,
        })
        .collect();
    let mut vm_host = vec![None; vms.len()];

    match policy {
        AllocPolicy::RoundRobin => {
            let mut cursor = 0;
            for (k, vm) in vms.iter().enumerate() {
                let chosen = (0..hosts.len())
                    .map(|t| (cursor + t) % hosts.len())
                    .find(|&h| free[h].fits(vm));
                if let Some(h) = chosen {
                    free[h].take(vm);
                    vm_host[k] = Some(h);
                    cursor = h + 1;
                }
            }
        }
        AllocPolicy::BestFitDecreasing => {
            let mut order: Vec<usize> = (0..vms.len()).collect();
            order.sort_by(|&a, &b| vms[b].mips.total_cmp(&vms[a].mips).then(a.cmp(&b)));
            for k in order {
                let vm = &vms[k];
                let chosen = (0..hosts.len())
                    .filter(|&h| free[h].fits(vm))
                    .min_by(|&a, &b| {
                        (free[a].mips - vm.mips)
                            .total_cmp(&(free[b].mips - vm.mips))
                            .then(a.cmp(&b))
                    });
                if let Some(h) = chosen {
                    free[h].take(vm);
                    vm_host[k] = Some(h);
                }
            }
        }
    }

    let unplaced: Vec<usize> = (0..vms.len()).filter(|&k| vm_host[k].is_none()).collect();
    if unplaced.len() == vms.len() {
        return Err(Error::Allocation { unplaced });
    }
    Ok(AllocationPlan {
        hosts: hosts.to_vec(),
        vms: vms.to_vec(),
        vm_host,
        unplaced,
        cloudlet_vm: Vec::new(),
    })
}

/// Binds each cloudlet to its service's VM, or to the least-loaded placed VM
/// (ties by VM id) when the service's VM is unplaced.
pub fn bind_cloudlets(plan: &mut AllocationPlan, cloudlets: &[Cloudlet]) {
    let mut load = vec![0usize; plan.vms.len()];
    let mut binding = vec![None; cloudlets.len()];
    let mut fallback = Vec::new();
    for (c, cl) in cloudlets.iter().enumerate() {
        let own = plan
            .vms
            .iter()
            .position(|vm| vm.service == cl.service)
            .filter(|&v| plan.vm_host[v].is_some());
        match own {
            Some(v) => {
                binding[c] = Some(v);
                load[v] += 1;
            }
            None => fallback.push(c),
        }
    }
    for c in fallback {
        let target = (0..plan.vms.len())
            .filter(|&v| plan.vm_host[v].is_some())
            .min_by_key(|&v| (load[v], v));
        if let Some(v) = target {
            binding[c] = Some(v);
            load[v] += 1;
        }
    }
    plan.cloudlet_vm = binding;
}

impl AllocationPlan {
    /// Summed (mips, ram, bw) requests of the VMs placed on `host`.
    pub fn host_load(&self, host: usize) -> (f64, f64, f64) {
        self.vms
            .iter()
            .zip(&self.vm_host)
            .filter(|(_, h)| **h == Some(host))
            .fold((0.0, 0.0, 0.0), |acc, (vm, _)| {
                (acc.0 + vm.mips, acc.1 + vm.ram, acc.2 + vm.bw)
            })
    }

    /// Whether every host's load fits its capacity in all dimensions.
    pub fn within_capacity(&self) -> bool {
        self.hosts.iter().enumerate().all(|(k, h)| {
            let (mips, ram, bw) = self.host_load(k);
            mips <= h.mips && ram <= h.ram && bw <= h.bw
        })
    }

    pub fn placed_count(&self) -> usize {
        self.vm_host.iter().filter(|h| h.is_some()).count()
    }

    /// MIPS a VM actually receives; with contention an oversubscribed host
    /// splits its capacity in proportion to the co-resident requests.
    pub fn vm_effective_mips(&self, vm: usize, contention: bool) -> Option<f64> {
        let host = self.vm_host[vm]?;
        let requested = self.vms[vm].mips;
        if !contention {
            return Some(requested);
        }
        let (load, _, _) = self.host_load(host);
        let cap = self.hosts[host].mips;
        Some(if load > cap {
            cap * requested / load
        } else {
            requested
        })
    }

    /// Writes `vm_id,host_id`; unplaced VMs get an empty host field.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["vm_id", "host_id"])?;
        for (vm, host) in self.vms.iter().zip(&self.vm_host) {
            let host = host.map(|h| self.hosts[h].id.to_string()).unwrap_or_default();
            wtr.write_record([vm.id.to_string(), host])?;
        }
        wtr.flush().map_err(|e| Error::io("<allocation csv>", e))?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServiceQoS {
    pub service: ServiceId,
    /// Seconds.
    pub response_time: f64,
    /// Requests per second, the reciprocal of `response_time`.
    pub throughput: f64,
}

/// Nudges `rt` by at most one ulp and its rounded reciprocal by at most two
/// so that the f64 product of the pair is exactly 1.
fn reciprocal_pair(rt: f64) -> (f64, f64) {
    let nudge = |x: f64, ulps: i64| f64::from_bits((x.to_bits() as i64 + ulps) as u64);
    for dr in [0, 1, -1] {
        let r = nudge(rt, dr);
        let inv = 1.0 / r;
        for dt in [0, -1, 1, -2, 2] {
            let t = nudge(inv, dt);
            if r * t == 1.0 {
                return (r, t);
            }
        }
    }
    (rt, 1.0 / rt)
}

/// Response time `length / effective MIPS` per service.
///
/// With contention, cloudlets bound to the same VM also split that VM's
/// effective MIPS evenly. A service with several cloudlets reports their
/// mean response time.
pub fn simulate_qos(
    plan: &AllocationPlan,
    cloudlets: &[Cloudlet],
    contention: bool,
) -> Result<Vec<ServiceQoS>> {
    let mut sharing = vec![0usize; plan.vms.len()];
    for c in 0..cloudlets.len() {
        if let Some(Some(v)) = plan.cloudlet_vm.get(c) {
            sharing[*v] += 1;
        }
    }

    let mut per_service: std::collections::BTreeMap<ServiceId, Vec<f64>> = Default::default();
    for (c, cl) in cloudlets.iter().enumerate() {
        if cl.length.is_nan() || cl.length <= 0.0 {
            return Err(Error::domain(format!("cloudlet {} has non-positive length", cl.id)));
        }
        let vm = plan
            .cloudlet_vm
            .get(c)
            .copied()
            .flatten()
            .ok_or_else(|| Error::domain(format!("cloudlet {} is not bound to a VM", cl.id)))?;
        let mut mips = plan
            .vm_effective_mips(vm, contention)
            .ok_or_else(|| Error::domain(format!("cloudlet {} runs on unplaced VM {vm}", cl.id)))?;
        if contention {
            mips /= sharing[vm] as f64;
        }
        per_service
            .entry(cl.service)
            .or_default()
            .push(cl.length / mips);
    }

    Ok(per_service
        .into_iter()
        .map(|(service, times)| {
            let (response_time, throughput) =
                reciprocal_pair(times.iter().sum::<f64>() / times.len() as f64);
            ServiceQoS {
                service,
                response_time,
                throughput,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QosMetric {
    #[default]
    Throughput,
    ResponseTime,
}

impl QosMetric {
    pub fn orientation(self) -> MetricOrientation {
        match self {
            QosMetric::Throughput => MetricOrientation::LargerIsBetter,
            QosMetric::ResponseTime => MetricOrientation::SmallerIsBetter,
        }
    }

    fn pick(self, q: &ServiceQoS) -> f64 {
        match self {
            QosMetric::Throughput => q.throughput,
            QosMetric::ResponseTime => q.response_time,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HostSpec {
    pub count: usize,
    pub mips: f64,
    pub ram: f64,
    pub bw: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VmRequest {
    pub mips: f64,
    pub ram: f64,
    pub bw: f64,
}

/// A complete simulation scenario, one VM and one cloudlet per service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub hosts: HostSpec,
    pub vms: Vec<VmRequest>,
    /// Cloudlet length (MI) per service.
    pub cloudlets: Vec<f64>,
    pub policy: AllocPolicy,
    pub num_users: usize,
    pub seed: u64,
    /// Noise half-width as a fraction of the base QoS spread (max - min).
    pub noise_amplitude: f64,
    /// User factors are drawn from `[1 - spread, 1 + spread]`.
    pub user_factor_spread: f64,
    #[serde(default = "default_true")]
    pub contention: bool,
    #[serde(default)]
    pub metric: QosMetric,
}

fn default_true() -> bool {
    true
}

impl Default for ScenarioConfig {
    /// 30 services on 9 hosts at 99% MIPS utilization; requests drawn once
    /// from a fixed seed.
    fn default() -> Self {
        const SERVICES: usize = 30;
        let mut r = rng::seeded(20_130_601);
        let mips_levels = [250.0, 500.0, 750.0, 1000.0, 1250.0, 1500.0];
        let ram_levels = [512.0, 1024.0, 2048.0];
        let vms = (0..SERVICES)
            .map(|_| VmRequest {
                mips: mips_levels[rng::below(&mut r, mips_levels.len())],
                ram: ram_levels[rng::below(&mut r, ram_levels.len())],
                bw: 100.0 * (1 + rng::below(&mut r, 10)) as f64,
            })
            .collect();
        let cloudlets = (0..SERVICES)
            .map(|_| 1000.0 * (5 + rng::below(&mut r, 46)) as f64)
            .collect();
        ScenarioConfig {
            hosts: HostSpec {
                count: 9,
                mips: 3000.0,
                ram: 16384.0,
                bw: 10000.0,
            },
            vms,
            cloudlets,
            policy: AllocPolicy::RoundRobin,
            num_users: 50,
            seed: 7,
            noise_amplitude: 0.05,
            user_factor_spread: 0.3,
            contention: true,
            metric: QosMetric::Throughput,
        }
    }
}

impl ScenarioConfig {
    pub fn num_services(&self) -> usize {
        self.vms.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.vms.is_empty() || self.num_users == 0 || self.hosts.count == 0 {
            return Err(Error::Config(
                "scenario needs at least one host, service and user".into(),
            ));
        }
        if self.cloudlets.len() != self.vms.len() {
            return Err(Error::Config(format!(
                "{} cloudlet lengths for {} services",
                self.cloudlets.len(),
                self.vms.len()
            )));
        }
        if self.noise_amplitude.is_nan() || self.noise_amplitude < 0.0 || !(0.0..1.0).contains(&self.user_factor_spread) {
            return Err(Error::Config(
                "noise_amplitude must be >= 0 and user_factor_spread in [0, 1)".into(),
            ));
        }
        Ok(())
    }

    pub fn build_hosts(&self) -> Vec<Host> {
        (0..self.hosts.count)
            .map(|id| Host {
                id,
                mips: self.hosts.mips,
                ram: self.hosts.ram,
                bw: self.hosts.bw,
            })
            .collect()
    }

    pub fn build_vms(&self) -> Vec<VirtualMachine> {
        self.vms
            .iter()
            .enumerate()
            .map(|(id, r)| VirtualMachine {
                id,
                service: ServiceId(id),
                mips: r.mips,
                ram: r.ram,
                bw: r.bw,
            })
            .collect()
    }

    pub fn build_cloudlets(&self) -> Vec<Cloudlet> {
        self.cloudlets
            .iter()
            .enumerate()
            .map(|(id, &length)| Cloudlet {
                id,
                service: ServiceId(id),
                length,
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct Synthesis {
    pub plan: AllocationPlan,
    pub base: Vec<ServiceQoS>,
    /// Canonical orientation.
    pub matrix: QoSMatrix,
    pub orientation: MetricOrientation,
}

impl Synthesis {
    /// Base metric values in source orientation, indexed by service.
    pub fn base_values(&self, metric: QosMetric) -> Vec<f64> {
        self.base.iter().map(|q| metric.pick(q)).collect()
    }

    pub fn mean_response_time(&self) -> f64 {
        self.base.iter().map(|q| q.response_time).sum::<f64>() / self.base.len() as f64
    }
}

/// Runs the scenario under `policy` and expands the per-service base QoS
/// into a fully observed user × service matrix.
///
/// Each user's value is `base * factor_u + noise`, with the factor and the
/// noise drawn from streams seeded by `scenario.seed` only, so both policies
/// see the same users.
pub fn synth_matrix(scenario: &ScenarioConfig, policy: AllocPolicy) -> Result<Synthesis> {
    scenario.validate()?;
    let hosts = scenario.build_hosts();
    let vms = scenario.build_vms();
    let cloudlets = scenario.build_cloudlets();

    let mut plan = allocate(&hosts, &vms, policy)?;
    bind_cloudlets(&mut plan, &cloudlets);
    let base = simulate_qos(&plan, &cloudlets, scenario.contention)?;
    if base.len() != scenario.num_services() {
        return Err(Error::domain("some services produced no QoS"));
    }

    let metric = scenario.metric;
    let values: Vec<f64> = base.iter().map(|q| metric.pick(q)).collect();
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let noise_width = scenario.noise_amplitude * (hi - lo);

    let mut factor_rng = rng::seeded(rng::derive_seed(scenario.seed, &[1]));
    let mut noise_rng = rng::seeded(rng::derive_seed(scenario.seed, &[2]));
    let spread = scenario.user_factor_spread;
    let orientation = metric.orientation();

    let mut entries = Vec::with_capacity(scenario.num_users * values.len());
    for u in 0..scenario.num_users {
        let factor = rng::uniform(&mut factor_rng, 1.0 - spread, 1.0 + spread);
        for (s, &b) in values.iter().enumerate() {
            let noise = rng::uniform(&mut noise_rng, -noise_width, noise_width);
            let q = b * factor + noise;
            entries.push((UserId(u), ServiceId(s), orientation.canonicalize(q)));
        }
    }
    let matrix = QoSMatrix::from_entries(scenario.num_users, values.len(), entries)?;
    Ok(Synthesis {
        plan,
        base,
        matrix,
        orientation,
    })
}
