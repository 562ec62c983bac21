//! Dual fluid paths and the optimal trajectories obtained by reversing them.
//!
//! Started at a target `r`, the fluid limit of the dual network moves with
//! constant velocity `lambda_bar - (I - P_bar^T) d_bar^(J)` on each face `J`,
//! where `d_bar^(J)_l` is `mu_l` off the face and `nu_l / rho~_l` on it, and
//! reaches the origin after at most `2^K` segments. Running the same
//! polyline backwards from the origin gives the optimal path to `r`; along
//! each piece the momentum is the face momentum `theta~^(J)` and the total
//! cost is `theta* . r`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::face::FaceLabel;
use crate::hamiltonian::{grad_h0, legendre_face, subgrad_face, LegendreOptions};
use crate::linalg::{dot, norm_inf};
use crate::momenta::{FaceMomenta, MomentaTable, ESSENTIAL_TOLERANCE};
use crate::netmodel::{DualNetwork, Network};

/// Boundary snapping, relative to `|r|_inf`.
pub const SNAP_TOLERANCE: f64 = 1e-12;
/// Stopping radius around the origin, relative to `|r|_inf`.
pub const ORIGIN_TOLERANCE: f64 = 1e-9;
/// A coordinate leaves zero only when its velocity exceeds this.
pub const LEAVE_TOLERANCE: f64 = 1e-12;
const HIT_TOLERANCE: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FluidSegment {
    pub t_start: f64,
    pub t_end: f64,
    pub face: FaceLabel,
    pub start_point: Vec<f64>,
    pub velocity: Vec<f64>,
}

impl FluidSegment {
    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }

    pub fn end_point(&self) -> Vec<f64> {
        let d = self.duration();
        self.start_point.iter().zip(&self.velocity).map(|(x, v)| x + v * d).collect()
    }

    fn position(&self, t: f64) -> Vec<f64> {
        let s = t - self.t_start;
        self.start_point.iter().zip(&self.velocity).map(|(x, v)| (x + v * s).max(0.0)).collect()
    }
}

/// Dual fluid path from `source` to the origin.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FluidTrajectory {
    pub source: Vec<f64>,
    pub segments: Vec<FluidSegment>,
    pub t_star: f64,
    /// Zero coordinates of the source.
    pub source_face: FaceLabel,
    pub source_face_essential: bool,
}

impl FluidTrajectory {
    /// Position at dual time `t`, clamped to `[0, T*]`.
    pub fn position(&self, t: f64) -> Vec<f64> {
        if self.segments.is_empty() {
            return self.source.clone();
        }
        if t >= self.t_star {
            return vec![0.0; self.source.len()];
        }
        let seg = self
            .segments
            .iter()
            .find(|s| t < s.t_end)
            .unwrap_or_else(|| self.segments.last().expect("nonempty"));
        seg.position(t.max(0.0))
    }

    /// Segment boundary times, `0` and `T*` included.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out = vec![0.0];
        out.extend(self.segments.iter().map(|s| s.t_end));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathSegment {
    pub t_start: f64,
    pub duration: f64,
    pub face: FaceLabel,
    pub start_point: Vec<f64>,
    pub displacement: Vec<f64>,
    pub velocity: Vec<f64>,
    pub momentum: Vec<f64>,
}

/// Optimal path from the origin to `target`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimalPath {
    pub target: Vec<f64>,
    pub segments: Vec<PathSegment>,
    pub total_time: f64,
    /// `theta* . r`.
    pub cost: f64,
    /// Largest `|v - dH_J(theta~)|` over the segments.
    pub inclusion_residual: f64,
}

fn scale_of(table: &MomentaTable) -> f64 {
    let net = table.network();
    net.lambda.iter().chain(&net.mu).fold(1.0, |m: f64, v| m.max(*v))
}

/// Dual-flow velocity `lambda_bar - (I - P_bar^T) d_bar` for face `J`,
/// written in primal quantities.
fn dual_flow_velocity(face: &FaceMomenta, table: &MomentaTable) -> Vec<f64> {
    let net = table.network();
    let traffic = table.traffic();
    let k = net.k();
    // d_bar_l / nu_l
    let inv_load: Vec<f64> = (0..k)
        .map(|l| match face.rho_tilde_of(l) {
            Some(rt) => 1.0 / rt,
            None => 1.0 / traffic.rho[l],
        })
        .collect();
    (0..k)
        .map(|i| {
            let nu = traffic.nu[i];
            let lambda_bar = nu * net.exit_prob(i);
            let inflow: f64 = nu * (0..k).map(|l| net.p(i, l) * inv_load[l]).sum::<f64>();
            lambda_bar - nu * inv_load[i] + inflow
        })
        .collect()
}

/// Velocity of the optimal (forward) path on face `J`:
/// `d_k H_0(theta*) + sum_{l in J} (rho_l^{-1} - rho~_l^{-1}) p_kl nu_k` off the
/// face and zero on it. Checked against the dual-flow form.
///
/// Fails with [`Error::InessentialFace`], carrying the velocity, when the
/// face cannot hold an optimal path.
pub fn face_velocity(face: FaceLabel, table: &MomentaTable) -> Result<Vec<f64>> {
    let fm = table.face(face)?;
    let net = table.network();
    let traffic = table.traffic();
    let k = net.k();
    let grad = grad_h0(&table.theta_star, net)?;
    let mut v = vec![0.0; k];
    for i in face.complement(k).indices() {
        let push: f64 = face
            .indices()
            .zip(&fm.rho_tilde)
            .map(|(l, rt)| (1.0 / traffic.rho[l] - 1.0 / rt) * net.p(i, l))
            .sum();
        v[i] = grad[i] + push * traffic.nu[i];
    }
    let dual = dual_flow_velocity(&fm, table);
    let tol = 1e-10 * scale_of(table);
    for i in 0..k {
        let expected = if face.contains(i) { 0.0 } else { -dual[i] };
        let on_face_residual = if face.contains(i) { dual[i].abs() } else { 0.0 };
        if (v[i] - expected).abs() > tol || on_face_residual > tol {
            return Err(Error::Invariant(format!(
                "face {face}: velocity component {i} is {} but the dual flow gives {}",
                v[i], -dual[i]
            )));
        }
    }
    if !fm.essential {
        return Err(Error::InessentialFace { face, velocity: v });
    }
    Ok(v)
}

/// `-grad H_0(theta*)` and `lambda_bar - (I - P_bar^T) mu`; they coincide.
pub fn drift_identity(table: &MomentaTable, dual: &DualNetwork) -> Result<(Vec<f64>, Vec<f64>)> {
    let g = grad_h0(&table.theta_star, table.network())?;
    let k = g.len();
    let lhs = g.iter().map(|x| -x).collect();
    let pbt_mu = dual.p_bar().transpose().mul_vec(dual.mu());
    let rhs = (0..k).map(|i| dual.lambda_bar()[i] - dual.mu()[i] + pbt_mu[i]).collect();
    Ok((lhs, rhs))
}

fn zero_set(x: &[f64], snap: f64) -> FaceLabel {
    FaceLabel::from_indices(x.iter().enumerate().filter(|(_, &v)| v <= snap).map(|(i, _)| i))
}

/// The reflection face at `x`: the largest `J` within the zero set `Z(x)`
/// whose reflection intensities are nonnegative and for which every other
/// zero coordinate strictly leaves the boundary under the dual flow.
pub fn resolve_face(x: &[f64], table: &MomentaTable, snap: f64) -> Result<FaceLabel> {
    let k = table.k();
    if x.len() != k {
        return Err(Error::DimensionMismatch(format!("point has {} entries for K = {k}", x.len())));
    }
    let z = zero_set(x, snap);
    let mut found: Vec<FaceLabel> = Vec::new();
    for j in z.subsets_largest_first() {
        if let Some(first) = found.first() {
            if j.len() < first.len() {
                break;
            }
        }
        let fm = table.face(j)?;
        if !fm.essential {
            continue;
        }
        let v = dual_flow_velocity(&fm, table);
        if z.intersection(j.complement(k)).indices().all(|i| v[i] > LEAVE_TOLERANCE) {
            found.push(j);
        }
    }
    match found.len() {
        0 => Err(Error::NoValidFace { point: x.to_vec() }),
        1 => Ok(found[0]),
        _ => Err(Error::AmbiguousFace { point: x.to_vec(), candidates: found }),
    }
}

fn check_target(r: &[f64], k: usize) -> Result<()> {
    if r.len() != k {
        return Err(Error::InvalidTarget(format!("target has {} entries for K = {k}", r.len())));
    }
    if let Some((i, v)) = r.iter().enumerate().find(|(_, v)| !v.is_finite() || **v < 0.0) {
        return Err(Error::InvalidTarget(format!("component {} is {v}", i + 1)));
    }
    Ok(())
}

/// Runs the dual fluid from `r` until it reaches the origin.
pub fn solve_dual_fluid(r: &[f64], table: &MomentaTable) -> Result<FluidTrajectory> {
    let k = table.k();
    check_target(r, k)?;
    let scale = norm_inf(r);
    let source_face = zero_set(r, 0.0);
    let source_face_essential = table.face(source_face)?.essential;
    if scale == 0.0 {
        return Ok(FluidTrajectory {
            source: r.to_vec(),
            segments: Vec::new(),
            t_star: 0.0,
            source_face,
            source_face_essential,
        });
    }
    let snap = SNAP_TOLERANCE * scale;
    let cap = (1usize << k.min(60)) + k;
    let mut x = r.to_vec();
    let mut t = 0.0;
    let mut segments: Vec<FluidSegment> = Vec::new();
    while norm_inf(&x) > ORIGIN_TOLERANCE * scale {
        if segments.len() >= cap {
            return Err(Error::NonConvergent { segments: segments.len() });
        }
        let face = resolve_face(&x, table, snap)?;
        let mut v = dual_flow_velocity(&table.face(face)?, table);
        for l in face.indices() {
            v[l] = 0.0;
            x[l] = 0.0;
        }
        let dt = (0..k)
            .filter(|&i| !face.contains(i) && v[i] < -HIT_TOLERANCE)
            .map(|i| x[i] / -v[i])
            .fold(f64::INFINITY, f64::min);
        if !dt.is_finite() {
            return Err(Error::Invariant(format!("dual fluid cannot leave {x:?} on face {face}")));
        }
        let start = x.clone();
        for i in 0..k {
            x[i] += v[i] * dt;
            if x[i] <= snap {
                x[i] = 0.0;
            }
        }
        segments.push(FluidSegment { t_start: t, t_end: t + dt, face, start_point: start, velocity: v });
        t += dt;
    }
    for w in segments.windows(2) {
        if !w[0].face.is_subset_of(w[1].face) {
            return Err(Error::Invariant(format!(
                "dual faces not nondecreasing: {} then {}",
                w[0].face, w[1].face
            )));
        }
    }
    Ok(FluidTrajectory { source: r.to_vec(), segments, t_star: t, source_face, source_face_essential })
}

/// Time reversal of a dual fluid path, with the face momenta attached.
/// Checks that each velocity lies in `dH_J(theta~^(J))` for the weights
/// `alpha_l = rho_l / rho~_l` and that faces shrink along the path.
pub fn reverse_to_optimal(traj: &FluidTrajectory, table: &MomentaTable) -> Result<OptimalPath> {
    let net = table.network();
    let t_star = traj.t_star;
    let tol = 1e-8 * scale_of(table);
    let mut segments = Vec::with_capacity(traj.segments.len());
    let mut residual: f64 = 0.0;
    for seg in traj.segments.iter().rev() {
        let fm = table.face(seg.face)?;
        let velocity: Vec<f64> = seg.velocity.iter().map(|v| -v).collect();
        let duration = seg.duration();
        let sub = subgrad_face(&fm.theta_tilde, seg.face, &fm.alpha, net)?;
        let res = norm_inf(&sub.iter().zip(&velocity).map(|(a, b)| a - b).collect::<Vec<_>>());
        residual = residual.max(res);
        if res > tol {
            return Err(Error::Invariant(format!(
                "velocity on {} misses the subdifferential by {res:e}",
                seg.face
            )));
        }
        segments.push(PathSegment {
            t_start: t_star - seg.t_end,
            duration,
            face: seg.face,
            start_point: seg.end_point().iter().map(|v| v.max(0.0)).collect(),
            displacement: velocity.iter().map(|v| v * duration).collect(),
            velocity,
            momentum: fm.theta_tilde,
        });
    }
    for w in segments.windows(2) {
        if !w[1].face.is_subset_of(w[0].face) {
            return Err(Error::Invariant(format!("path faces not nonincreasing: {} then {}", w[0].face, w[1].face)));
        }
    }
    Ok(OptimalPath {
        target: traj.source.clone(),
        segments,
        total_time: t_star,
        cost: dot(&table.theta_star, &traj.source),
        inclusion_residual: residual,
    })
}

/// `sum_l t_l L_{J_l}(s_l / t_l)` along the path.
pub fn path_cost(path: &OptimalPath, net: &Network) -> Result<f64> {
    let opts = LegendreOptions::default();
    let mut total = 0.0;
    for seg in &path.segments {
        if seg.duration > 0.0 {
            total += seg.duration * legendre_face(&seg.velocity, seg.face, net, &opts)?.value;
        }
    }
    Ok(total)
}

/// Cost of the polyline through `vertices` (starting at the first one), each
/// leg traversed in the matching duration. A leg's face is the set of
/// coordinates that vanish at both of its ends.
pub fn polyline_cost(vertices: &[Vec<f64>], durations: &[f64], net: &Network) -> Result<f64> {
    if vertices.len() != durations.len() + 1 {
        return Err(Error::DimensionMismatch(format!(
            "{} vertices need {} durations, got {}",
            vertices.len(),
            vertices.len().saturating_sub(1),
            durations.len()
        )));
    }
    let opts = LegendreOptions::default();
    let mut total = 0.0;
    for (w, &dt) in vertices.windows(2).zip(durations) {
        let face = FaceLabel::from_indices((0..net.k()).filter(|&i| w[0][i] == 0.0 && w[1][i] == 0.0));
        let y: Vec<f64> = w[0].iter().zip(&w[1]).map(|(a, b)| (b - a) / dt).collect();
        total += dt * legendre_face(&y, face, net, &opts)?.value;
    }
    Ok(total)
}

/// `max` over segments of the dual local cost at the dual velocity.
pub fn dual_rate_vanishes(traj: &FluidTrajectory, dual: &DualNetwork) -> Result<f64> {
    let opts = LegendreOptions::default();
    let mut worst: f64 = 0.0;
    for seg in &traj.segments {
        let v = legendre_face(&seg.velocity, seg.face, &dual.network, &opts)?;
        worst = worst.max(v.value.abs());
    }
    Ok(worst)
}

/// Two-node geometry: signs of the cross derivatives of `H_0` at the node
/// momenta and the essentiality of both axes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoNodeClassification {
    /// `d_2 H_0(theta^(1))`.
    pub d2_at_node1: f64,
    /// `d_1 H_0(theta^(2))`.
    pub d1_at_node2: f64,
    /// Face `{2}`.
    pub x_axis_essential: bool,
    /// Face `{1}`.
    pub y_axis_essential: bool,
    /// `grad H_0(theta*)`, normal to the zero level set at `theta*`.
    pub normal: Vec<f64>,
}

pub fn classify_two_node(table: &MomentaTable) -> Result<TwoNodeClassification> {
    if table.k() != 2 {
        return Err(Error::WrongDimension { expected: 2, got: table.k() });
    }
    let net = table.network();
    let d2 = grad_h0(&table.node_momenta[0].theta, net)?[1];
    let d1 = grad_h0(&table.node_momenta[1].theta, net)?[0];
    let x_axis = table.face(FaceLabel::from_indices([1]))?.essential;
    let y_axis = table.face(FaceLabel::from_indices([0]))?.essential;
    let tol = ESSENTIAL_TOLERANCE * scale_of(table);
    let sign_x = d2 <= tol;
    let sign_y = d1 <= tol;
    if sign_x != x_axis || sign_y != y_axis {
        return Err(Error::Invariant(format!(
            "sign test ({d2:e}, {d1:e}) disagrees with axis essentiality ({x_axis}, {y_axis})"
        )));
    }
    Ok(TwoNodeClassification {
        d2_at_node1: d2,
        d1_at_node2: d1,
        x_axis_essential: x_axis,
        y_axis_essential: y_axis,
        normal: grad_h0(&table.theta_star, net)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::build_dual;

    fn table_for(lambda: &[f64], mu: &[f64], p: &[Vec<f64>]) -> MomentaTable {
        let net = Network::from_rows(lambda, mu, p).unwrap().validate().unwrap();
        let t = net.solve_traffic().unwrap();
        MomentaTable::build(&net, &t).unwrap()
    }

    fn tandem() -> MomentaTable {
        table_for(&[1.0, 0.5], &[3.0, 4.0], &[vec![0.0, 0.5], vec![0.0, 0.0]])
    }

    fn mm1() -> MomentaTable {
        table_for(&[1.0], &[2.0], &[vec![0.0]])
    }

    #[test]
    fn single_node_velocities() {
        let t = mm1();
        assert_eq!(face_velocity(FaceLabel::EMPTY, &t).unwrap(), vec![1.0]);
        assert_eq!(face_velocity(FaceLabel::full(1), &t).unwrap(), vec![0.0]);
    }

    #[test]
    fn drift_identity_holds() {
        let t = tandem();
        let dual = build_dual(t.network(), t.traffic());
        let (a, b) = drift_identity(&t, &dual).unwrap();
        for i in 0..2 {
            assert!((a[i] - b[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn resolve_examples() {
        let t = tandem();
        assert_eq!(resolve_face(&[1.0, 1.0], &t, 0.0).unwrap(), FaceLabel::EMPTY);
        assert_eq!(resolve_face(&[0.0, 0.0], &t, 0.0).unwrap(), FaceLabel::full(2));
        assert_eq!(resolve_face(&[0.0, 1.0], &t, 0.0).unwrap(), FaceLabel::from_indices([0]));
    }

    #[test]
    fn single_node_path() {
        let t = mm1();
        let traj = solve_dual_fluid(&[1.0], &t).unwrap();
        assert_eq!(traj.segments.len(), 1);
        assert!((traj.t_star - 1.0).abs() < 1e-15);
        assert_eq!(traj.segments[0].velocity, vec![-1.0]);
        let path = reverse_to_optimal(&traj, &t).unwrap();
        assert!((path.cost - 2f64.ln()).abs() < 1e-15);
        assert_eq!(path.segments[0].velocity, vec![1.0]);
        assert!((path.segments[0].momentum[0] - 2f64.ln()).abs() < 1e-15);
        let c = path_cost(&path, t.network()).unwrap();
        assert!((c - 2f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn tandem_axis_target() {
        let t = tandem();
        let traj = solve_dual_fluid(&[1.0, 0.0], &t).unwrap();
        assert_eq!(traj.segments[0].face, FaceLabel::from_indices([1]));
        let path = reverse_to_optimal(&traj, &t).unwrap();
        assert!((path.cost - 3f64.ln()).abs() < 1e-14);
        let c = path_cost(&path, t.network()).unwrap();
        assert!((c - 3f64.ln()).abs() < 1e-6 * 3f64.ln());
        let dual = build_dual(t.network(), t.traffic());
        assert!(dual_rate_vanishes(&traj, &dual).unwrap() < 1e-6);
    }

    #[test]
    fn zero_target() {
        let t = tandem();
        let traj = solve_dual_fluid(&[0.0, 0.0], &t).unwrap();
        assert!(traj.segments.is_empty());
        let path = reverse_to_optimal(&traj, &t).unwrap();
        assert_eq!(path.cost, 0.0);
        assert_eq!(path_cost(&path, t.network()).unwrap(), 0.0);
    }

    #[test]
    fn invalid_targets() {
        let t = tandem();
        assert!(matches!(solve_dual_fluid(&[-1.0, 0.0], &t), Err(Error::InvalidTarget(_))));
        assert!(matches!(solve_dual_fluid(&[1.0], &t), Err(Error::InvalidTarget(_))));
    }

    #[test]
    fn tandem_classification() {
        let c = classify_two_node(&tandem()).unwrap();
        assert!(c.x_axis_essential && c.y_axis_essential);
        assert!(c.d2_at_node1 <= 0.0 && c.d1_at_node2 <= 0.0);
        assert!(matches!(classify_two_node(&mm1()), Err(Error::WrongDimension { .. })));
    }

    #[test]
    fn symmetric_classification() {
        let c = classify_two_node(&table_for(&[1.0, 1.0], &[5.0, 5.0], &[vec![0.0, 0.3], vec![0.3, 0.0]])).unwrap();
        assert_eq!(c.x_axis_essential, c.y_axis_essential);
        assert!((c.d2_at_node1 - c.d1_at_node2).abs() < 1e-12);
    }
}
