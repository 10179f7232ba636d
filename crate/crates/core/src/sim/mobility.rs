//! Node trajectories: fixed, or back and forth along a polyline.

use crate::geo::Point;
use crate::scenario::MobilityConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    points: Vec<Point>,
    /// Cumulative length at each point.
    marks: Vec<f64>,
    speed: f64,
}

impl Track {
    pub fn new(start: Point, mobility: &MobilityConfig) -> Self {
        let (points, speed) = match mobility {
            MobilityConfig::Stationary => (vec![start], 0.0),
            MobilityConfig::Waypoints { points, speed_mps } => {
                let mut v = vec![start];
                v.extend(points.iter().copied());
                (v, *speed_mps)
            }
        };
        let mut marks = vec![0.0];
        for w in points.windows(2) {
            marks.push(marks.last().unwrap() + w[0].distance(&w[1]));
        }
        Self { points, marks, speed }
    }

    pub fn length(&self) -> f64 {
        *self.marks.last().unwrap()
    }

    pub fn speed(&self) -> f64 {
        self.speed
    }

    /// Arc position and travel direction (+1 outbound, -1 returning).
    fn arc(&self, t: f64) -> (f64, f64) {
        let len = self.length();
        if len == 0.0 || self.speed == 0.0 {
            return (0.0, 1.0);
        }
        let s = (self.speed * t.max(0.0)).rem_euclid(2.0 * len);
        if s <= len {
            (s, 1.0)
        } else {
            (2.0 * len - s, -1.0)
        }
    }

    fn segment(&self, s: f64) -> usize {
        let i = self.marks.partition_point(|&m| m <= s);
        i.clamp(1, self.points.len() - 1) - 1
    }

    pub fn position_at(&self, t: f64) -> Point {
        if self.points.len() == 1 {
            return self.points[0];
        }
        let (s, _) = self.arc(t);
        let i = self.segment(s);
        let seg = self.marks[i + 1] - self.marks[i];
        if seg == 0.0 {
            return self.points[i];
        }
        let f = (s - self.marks[i]) / seg;
        self.points[i] + (self.points[i + 1] - self.points[i]) * f
    }

    pub fn velocity_at(&self, t: f64) -> Point {
        if self.points.len() == 1 || self.length() == 0.0 || self.speed == 0.0 {
            return Point::default();
        }
        let (s, dir) = self.arc(t);
        let i = self.segment(s);
        let d = self.points[i + 1] - self.points[i];
        let n = d.norm();
        if n == 0.0 {
            return Point::default();
        }
        d * (dir * self.speed / n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn line() -> Track {
        Track::new(
            Point::new(0.0, 0.0),
            &MobilityConfig::Waypoints {
                points: vec![Point::new(100.0, 0.0), Point::new(100.0, 50.0)],
                speed_mps: 10.0,
            },
        )
    }

    #[test]
    fn walks_out_and_back() {
        let t = line();
        assert_eq!(t.length(), 150.0);
        assert_eq!(t.position_at(5.0), Point::new(50.0, 0.0));
        assert_eq!(t.position_at(12.0), Point::new(100.0, 20.0));
        assert_eq!(t.position_at(15.0), Point::new(100.0, 50.0));
        assert_eq!(t.position_at(20.0), Point::new(100.0, 0.0));
        assert_eq!(t.position_at(30.0), Point::new(0.0, 0.0));
        assert_eq!(t.velocity_at(1.0), Point::new(10.0, 0.0));
        assert_eq!(t.velocity_at(25.0), Point::new(-10.0, 0.0));
    }

    #[test]
    fn stationary_never_moves() {
        let t = Track::new(Point::new(3.0, 4.0), &MobilityConfig::Stationary);
        assert_eq!(t.position_at(1e6), Point::new(3.0, 4.0));
        assert_eq!(t.velocity_at(7.0), Point::default());
    }

    proptest! {
        #[test]
        fn displacement_bounded_by_speed(a in 0.0f64..100.0, dt in 0.0f64..10.0) {
            let t = line();
            let moved = t.position_at(a).distance(&t.position_at(a + dt));
            prop_assert!(moved <= 10.0 * dt + 1e-9);
        }
    }
}
