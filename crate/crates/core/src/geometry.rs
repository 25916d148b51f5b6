//! Axis-aligned boxes, slab-method ray queries and the sensor ray fan.
//!
//! World frame: `y` is vertical and the ground plane sits at `y = ground_height`
//! (zero in every generated world). Obstacles are axis-aligned boxes, so the only
//! primitive needed for sensing is the ray/box slab test.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Tolerance on `|direction| = 1` accepted by [`ray_aabb_intersect`].
pub const UNIT_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec3<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> Vec3<T> {
    pub const fn new(x: T, y: T, z: T) -> Self {
        Self { x, y, z }
    }

    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero(), T::zero())
    }

    pub fn splat(v: T) -> Self {
        Self::new(v, v, v)
    }

    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn norm(self) -> T {
        self.dot(self).sqrt()
    }

    pub fn distance(self, o: Self) -> T {
        (self - o).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn component_min(self, o: Self) -> Self {
        Self::new(self.x.min(o.x), self.y.min(o.y), self.z.min(o.z))
    }

    pub fn component_max(self, o: Self) -> Self {
        Self::new(self.x.max(o.x), self.y.max(o.y), self.z.max(o.z))
    }

    pub fn map(self, f: impl Fn(T) -> T) -> Self {
        Self::new(f(self.x), f(self.y), f(self.z))
    }

    pub fn to_array(self) -> [T; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_array(a: [T; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn axis(self, i: usize) -> T {
        match i {
            0 => self.x,
            1 => self.y,
            2 => self.z,
            _ => panic!("axis index {i} out of range"),
        }
    }
}

impl<T: Real> Add for Vec3<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<T: Real> AddAssign for Vec3<T> {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<T: Real> Sub for Vec3<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<T: Real> Mul<T> for Vec3<T> {
    type Output = Self;
    fn mul(self, s: T) -> Self {
        Self::new(self.x * s, self.y * s, self.z * s)
    }
}

impl<T: Real> Neg for Vec3<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y, -self.z)
    }
}

/// Axis-aligned box with inclusive faces.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb<T> {
    pub min: Vec3<T>,
    pub max: Vec3<T>,
}

impl<T: Real> Aabb<T> {
    /// Builds a box, rejecting inverted or non-finite corners.
    pub fn new(min: Vec3<T>, max: Vec3<T>) -> Result<Self> {
        if !min.is_finite() || !max.is_finite() {
            return Err(Error::invalid("box corners must be finite"));
        }
        if min.x > max.x || min.y > max.y || min.z > max.z {
            return Err(Error::invalid(format!(
                "box min {min:?} exceeds max {max:?} on some axis"
            )));
        }
        Ok(Self { min, max })
    }

    pub fn from_center_half(center: Vec3<T>, half: Vec3<T>) -> Result<Self> {
        Self::new(center - half, center + half)
    }

    pub fn contains(&self, p: Vec3<T>) -> bool {
        p.x >= self.min.x
            && p.x <= self.max.x
            && p.y >= self.min.y
            && p.y <= self.max.y
            && p.z >= self.min.z
            && p.z <= self.max.z
    }

    pub fn inflated(&self, by: T) -> Self {
        Self {
            min: self.min - Vec3::splat(by),
            max: self.max + Vec3::splat(by),
        }
    }

    pub fn center(&self) -> Vec3<T> {
        (self.min + self.max) * T::lit(0.5)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RayConfig<T> {
    pub n_horizontal: usize,
    pub include_down_ray: bool,
    pub max_range: T,
}

impl<T: Real> Default for RayConfig<T> {
    fn default() -> Self {
        Self {
            n_horizontal: 8,
            include_down_ray: true,
            max_range: T::lit(20.0),
        }
    }
}

impl<T: Real> RayConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.n_horizontal == 0 {
            return Err(Error::invalid("ray fan needs at least one horizontal ray"));
        }
        if !(self.max_range > T::zero()) || !self.max_range.is_finite() {
            return Err(Error::invalid("ray max_range must be positive and finite"));
        }
        Ok(())
    }

    /// Number of readings produced by [`cast_ray_fan`].
    pub fn n_rays(&self) -> usize {
        self.n_horizontal + usize::from(self.include_down_ray)
    }

    /// Unit direction of horizontal ray `k`, at world azimuth `2πk/n` measured from `+x` toward `+z`.
    pub fn horizontal_direction(&self, k: usize) -> Vec3<T> {
        let theta = T::lit(std::f64::consts::TAU) * T::lit(k as f64) / T::lit(self.n_horizontal as f64);
        Vec3::new(theta.cos(), T::zero(), theta.sin())
    }
}

/// One sensor reading. `hit == false` exactly when `distance == max_range`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RayReading<T> {
    pub distance: T,
    pub hit: bool,
}

impl<T: Real> RayReading<T> {
    fn from_distance(d: Option<T>, max_range: T) -> Self {
        match d {
            Some(d) if d < max_range => Self { distance: d, hit: true },
            _ => Self {
                distance: max_range,
                hit: false,
            },
        }
    }
}

/// Slab test without contract checks. Returns the entry parameter clamped to `t >= 0`,
/// i.e. `0` for an origin inside (or on) the box.
fn slab_entry<T: Real>(origin: Vec3<T>, dir: Vec3<T>, b: &Aabb<T>) -> Option<T> {
    let mut t_enter = T::zero();
    let mut t_exit = T::infinity();
    for axis in 0..3 {
        let o = origin.axis(axis);
        let d = dir.axis(axis);
        let lo = b.min.axis(axis);
        let hi = b.max.axis(axis);
        if d == T::zero() {
            if o < lo || o > hi {
                return None;
            }
            continue;
        }
        let inv = T::one() / d;
        let (t0, t1) = {
            let a = (lo - o) * inv;
            let c = (hi - o) * inv;
            if a <= c {
                (a, c)
            } else {
                (c, a)
            }
        };
        t_enter = t_enter.max(t0);
        t_exit = t_exit.min(t1);
        if t_enter > t_exit {
            return None;
        }
    }
    Some(t_enter)
}

/// Smallest `t` in `[0, max_range)` with `origin + t·direction` inside or on `b`.
///
/// `direction` must be unit length within [`UNIT_TOLERANCE`]; every input must be finite.
pub fn ray_aabb_intersect<T: Real>(
    origin: Vec3<T>,
    direction: Vec3<T>,
    b: &Aabb<T>,
    max_range: T,
) -> Result<Option<T>> {
    if !origin.is_finite() || !direction.is_finite() || !b.min.is_finite() || !b.max.is_finite() {
        return Err(Error::invalid("ray query inputs must be finite"));
    }
    if !max_range.is_finite() || !(max_range > T::zero()) {
        return Err(Error::invalid("max_range must be positive and finite"));
    }
    let len = direction.norm().as_f64();
    if (len - 1.0).abs() > UNIT_TOLERANCE {
        return Err(Error::invalid(format!(
            "ray direction must be unit length, got |d| = {len}"
        )));
    }
    Ok(slab_entry(origin, direction, b).filter(|&t| t < max_range))
}

fn nearest_hit<T: Real>(origin: Vec3<T>, dir: Vec3<T>, world: &[Aabb<T>], max_range: T) -> Option<T> {
    world
        .iter()
        .filter_map(|b| slab_entry(origin, dir, b))
        .filter(|&t| t < max_range)
        .fold(None, |best: Option<T>, t| Some(best.map_or(t, |b| b.min(t))))
}

/// Casts the horizontal fan (azimuths `2πk/n`) plus the optional down ray from `position`.
///
/// The down ray also sees the ground plane at `ground_height`.
pub fn cast_ray_fan<T: Real>(
    position: Vec3<T>,
    world: &[Aabb<T>],
    ground_height: T,
    cfg: &RayConfig<T>,
) -> Result<Vec<RayReading<T>>> {
    cfg.validate()?;
    if !position.is_finite() {
        return Err(Error::invalid("ray fan origin must be finite"));
    }
    if position.y < ground_height {
        return Err(Error::invalid(format!(
            "ray fan origin below ground: y = {} < {}",
            position.y, ground_height
        )));
    }
    let mut out = Vec::with_capacity(cfg.n_rays());
    for k in 0..cfg.n_horizontal {
        let dir = cfg.horizontal_direction(k);
        let hit = nearest_hit(position, dir, world, cfg.max_range);
        out.push(RayReading::from_distance(hit, cfg.max_range));
    }
    if cfg.include_down_ray {
        let down = Vec3::new(T::zero(), -T::one(), T::zero());
        let ground = position.y - ground_height;
        let boxes = nearest_hit(position, down, world, cfg.max_range);
        let d = boxes.map_or(ground, |b| b.min(ground));
        out.push(RayReading::from_distance(Some(d), cfg.max_range));
    }
    Ok(out)
}

/// True when `p` is inside some box grown by `inflate` on every face, or within
/// `inflate` of the ground plane.
pub fn point_in_any_box<T: Real>(p: Vec3<T>, world: &[Aabb<T>], ground_height: T, inflate: T) -> bool {
    debug_assert!(inflate >= T::zero());
    if p.y - inflate < ground_height {
        return true;
    }
    world.iter().any(|b| b.inflated(inflate).contains(p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(x: f64, y: f64, z: f64) -> Vec3<f64> {
        Vec3::new(x, y, z)
    }

    fn bx(min: Vec3<f64>, max: Vec3<f64>) -> Aabb<f64> {
        Aabb::new(min, max).unwrap()
    }

    /// March along the ray and report the first sample inside the box.
    fn march(origin: Vec3<f64>, dir: Vec3<f64>, b: &Aabb<f64>, max_range: f64, step: f64) -> Option<f64> {
        let n = (max_range / step).ceil() as usize;
        (0..n)
            .map(|i| i as f64 * step)
            .find(|&t| b.contains(origin + dir * t))
    }

    fn unit(x: f64, y: f64, z: f64) -> Vec3<f64> {
        let d = v(x, y, z);
        d * (1.0 / d.norm())
    }

    #[test]
    fn axis_aligned_entry() {
        let b = bx(v(2., -1., -1.), v(3., 1., 1.));
        let t = ray_aabb_intersect(v(0., 0., 0.), v(1., 0., 0.), &b, 25.0).unwrap();
        assert_eq!(t, Some(2.0));
    }

    #[test]
    fn parallel_miss() {
        let b = bx(v(2., -1., -1.), v(3., 1., 1.));
        let t = ray_aabb_intersect(v(0., 0., 0.), v(0., 0., 1.), &b, 25.0).unwrap();
        assert_eq!(t, None);
    }

    #[test]
    fn origin_inside_is_zero() {
        let b = bx(v(2., -1., -1.), v(3., 1., 1.));
        let o = v(2.5, 0., 0.);
        let t = ray_aabb_intersect(o, v(1., 0., 0.), &b, 25.0).unwrap();
        assert_eq!(t, Some(0.0));
        assert_eq!(march(o, v(1., 0., 0.), &b, 25.0, 1e-3), Some(0.0));
    }

    #[test]
    fn beyond_range_is_absent() {
        let b = bx(v(30., -1., -1.), v(31., 1., 1.));
        let t = ray_aabb_intersect(v(0., 0., 0.), v(1., 0., 0.), &b, 25.0).unwrap();
        assert_eq!(t, None);
        // exactly at max_range is not a hit: the interval is half-open
        let b = bx(v(25., -1., -1.), v(26., 1., 1.));
        assert_eq!(ray_aabb_intersect(v(0., 0., 0.), v(1., 0., 0.), &b, 25.0).unwrap(), None);
    }

    #[test]
    fn box_behind_origin_is_absent() {
        let b = bx(v(-3., -1., -1.), v(-2., 1., 1.));
        assert_eq!(ray_aabb_intersect(v(0., 0., 0.), v(1., 0., 0.), &b, 25.0).unwrap(), None);
    }

    #[test]
    fn rejects_bad_inputs() {
        let b = bx(v(2., -1., -1.), v(3., 1., 1.));
        assert!(ray_aabb_intersect(v(0., 0., 0.), v(2., 0., 0.), &b, 25.0).is_err());
        assert!(ray_aabb_intersect(v(f64::NAN, 0., 0.), v(1., 0., 0.), &b, 25.0).is_err());
        assert!(ray_aabb_intersect(v(0., 0., 0.), v(1., 0., 0.), &b, 0.0).is_err());
        assert!(Aabb::new(v(1., 0., 0.), v(0., 1., 1.)).is_err());
    }

    #[test]
    fn empty_world_fan() {
        let r = cast_ray_fan(v(0., 10., 0.), &[], 0.0, &RayConfig::default()).unwrap();
        assert_eq!(r.len(), 9);
        for h in &r[..8] {
            assert_eq!(*h, RayReading { distance: 20.0, hit: false });
        }
        assert_eq!(r[8], RayReading { distance: 10.0, hit: true });
    }

    #[test]
    fn fan_sees_box_ahead() {
        let world = [bx(v(5., 0., -1.), v(6., 20., 1.))];
        let r = cast_ray_fan(v(0., 10., 0.), &world, 0.0, &RayConfig::default()).unwrap();
        assert_eq!(r[0], RayReading { distance: 5.0, hit: true });
        // the opposite ray and the side rays see nothing
        assert!(!r[4].hit);
        assert!(!r[2].hit && !r[6].hit);
    }

    #[test]
    fn down_ray_prefers_roof_over_ground() {
        let world = [bx(v(-1., 0., -1.), v(1., 4., 1.))];
        let r = cast_ray_fan(v(0., 10., 0.), &world, 0.0, &RayConfig::default()).unwrap();
        assert_eq!(r[8], RayReading { distance: 6.0, hit: true });
    }

    #[test]
    fn down_ray_out_of_range_altitude() {
        let r = cast_ray_fan(v(0., 35., 0.), &[], 0.0, &RayConfig::default()).unwrap();
        assert_eq!(r[8], RayReading { distance: 20.0, hit: false });
    }

    #[test]
    fn fan_rejects_underground_origin() {
        assert!(cast_ray_fan(v(0., -1., 0.), &[], 0.0, &RayConfig::<f64>::default()).is_err());
    }

    #[test]
    fn containment_predicate() {
        let b = [bx(v(2., 0., -1.), v(3., 1., 1.))];
        assert!(point_in_any_box(v(2.5, 0.5, 0.), &b, -10.0, 0.0));
        assert!(!point_in_any_box(v(10., 10., 10.), &[], 0.0, 0.5));
        assert!(point_in_any_box(v(1.6, 0.5, 0.), &b, -10.0, 0.5));
        assert!(!point_in_any_box(v(1.4, 0.5, 0.), &b, -10.0, 0.5));
        // ground proximity
        assert!(point_in_any_box(v(10., 0.4, 10.), &[], 0.0, 0.5));
        assert!(!point_in_any_box(v(10., 0.6, 10.), &[], 0.0, 0.5));
    }

    /// Per-axis clamping distance from a point to a box.
    fn clamp_distance(p: Vec3<f64>, b: &Aabb<f64>) -> f64 {
        let q = p.component_max(b.min).component_min(b.max);
        p.distance(q)
    }

    #[test]
    fn inflation_matches_clamp_distance_on_faces() {
        let b = bx(v(2., 0., -1.), v(3., 1., 1.));
        // points that only overshoot one axis: the inflated box and the distance ball agree
        for &(p, expect) in &[
            (v(1.6, 0.5, 0.), true),
            (v(1.49, 0.5, 0.), false),
            (v(2.5, 1.5, 0.), true),
            (v(2.5, 0.5, 1.51), false),
        ] {
            let oracle = clamp_distance(p, &b) <= 0.5;
            assert_eq!(oracle, expect);
            assert_eq!(point_in_any_box(p, &[b], -10.0, 0.5), expect);
        }
    }

    fn arb_box() -> impl Strategy<Value = Aabb<f64>> {
        (-10.0..10.0f64, -10.0..10.0f64, -10.0..10.0f64, 0.1..5.0f64, 0.1..5.0f64, 0.1..5.0f64).prop_map(
            |(x, y, z, w, h, d)| bx(v(x, y, z), v(x + w, y + h, z + d)),
        )
    }

    fn arb_dir() -> impl Strategy<Value = Vec3<f64>> {
        (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
            .prop_filter("non-degenerate", |(x, y, z)| x * x + y * y + z * z > 1e-2)
            .prop_map(|(x, y, z)| unit(x, y, z))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn adding_a_box_never_lengthens_a_reading(
            boxes in proptest::collection::vec(arb_box(), 0..6),
            extra in arb_box(),
            px in -12.0..12.0f64, py in 0.0..12.0f64, pz in -12.0..12.0f64,
        ) {
            let cfg = RayConfig::default();
            let p = v(px, py + 10.0, pz);
            let before = cast_ray_fan(p, &boxes, -5.0, &cfg).unwrap();
            let mut more = boxes.clone();
            more.push(extra);
            let after = cast_ray_fan(p, &more, -5.0, &cfg).unwrap();
            for (a, b) in before.iter().zip(&after) {
                prop_assert!(b.distance <= a.distance);
                prop_assert!(b.distance >= 0.0 && b.distance <= cfg.max_range);
                prop_assert_eq!(b.hit, b.distance < cfg.max_range);
            }
        }

        #[test]
        fn down_ray_in_empty_world_is_altitude(alt in 0.0..19.999f64, g in -3.0..3.0f64) {
            let r = cast_ray_fan(v(1.0, g + alt, 2.0), &[], g, &RayConfig::default()).unwrap();
            prop_assert_eq!(r[8].distance, (g + alt) - g);
            prop_assert!(r[8].hit);
        }

        #[test]
        fn slab_agrees_with_marching(
            o in (-15.0..15.0f64, -15.0..15.0f64, -15.0..15.0f64),
            d in arb_dir(),
            b in arb_box(),
        ) {
            let origin = v(o.0, o.1, o.2);
            let step = 1e-3;
            let slab = ray_aabb_intersect(origin, d, &b, 25.0).unwrap();
            let marched = march(origin, d, &b, 25.0, step);
            match (slab, marched) {
                (Some(s), Some(m)) => prop_assert!(m >= s - 1e-12 && m - s <= step + 1e-9, "slab {} march {}", s, m),
                (None, None) => {}
                // grazing: the chord through the box is shorter than one marching step
                (Some(s), None) => {
                    prop_assert!(b.inflated(1e-9).contains(origin + d * s));
                    prop_assert!(!b.inflated(-1e-9).contains(origin + d * (s + step)), "slab hit at {} missed by marching", s);
                }
                (None, Some(m)) => prop_assert!(false, "marching hit at {} but slab missed", m),
            }
        }
    }
}
