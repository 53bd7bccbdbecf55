//! Signed distance to a static obstacle scene.

/// A circular obstacle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Circle {
    pub center: [f64; 2],
    pub radius: f64,
}

/// A scene of circular obstacles. The signed distance of a point is the
/// minimum over obstacles of `|p - center| - radius`; an empty scene is
/// infinitely far from everything.
#[derive(Debug, Clone, Default)]
pub struct SdfScene {
    circles: Vec<Circle>,
}

impl SdfScene {
    pub fn new(circles: Vec<Circle>) -> Self {
        Self { circles }
    }

    pub fn empty() -> Self {
        Self { circles: Vec::new() }
    }

    pub fn circles(&self) -> &[Circle] {
        &self.circles
    }

    pub fn is_empty(&self) -> bool {
        self.circles.is_empty()
    }

    /// Signed distance at `p`: negative inside an obstacle.
    pub fn distance(&self, p: [f64; 2]) -> f64 {
        self.circles
            .iter()
            .map(|c| circle_distance(c, p))
            .fold(f64::INFINITY, f64::min)
    }

    /// Signed distance and its gradient at `p`.
    ///
    /// The gradient follows the closest obstacle; ties break toward the
    /// lower obstacle index, and the gradient at an obstacle center (where
    /// the distance field has a kink) is defined as zero.
    pub fn distance_and_gradient(&self, p: [f64; 2]) -> (f64, [f64; 2]) {
        let mut best = f64::INFINITY;
        let mut grad = [0.0, 0.0];
        for c in &self.circles {
            let d = circle_distance(c, p);
            if d < best {
                best = d;
                let dx = p[0] - c.center[0];
                let dy = p[1] - c.center[1];
                let norm = (dx * dx + dy * dy).sqrt();
                grad = if norm > 0.0 { [dx / norm, dy / norm] } else { [0.0, 0.0] };
            }
        }
        (best, grad)
    }
}

fn circle_distance(c: &Circle, p: [f64; 2]) -> f64 {
    let dx = p[0] - c.center[0];
    let dy = p[1] - c.center[1];
    (dx * dx + dy * dy).sqrt() - c.radius
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_scene_is_infinitely_far() {
        let scene = SdfScene::empty();
        assert_eq!(scene.distance([3.0, -1.0]), f64::INFINITY);
    }

    #[test]
    fn distance_to_unit_circle() {
        let scene = SdfScene::new(vec![Circle { center: [0.0, 0.0], radius: 1.0 }]);
        assert!((scene.distance([1.5, 0.0]) - 0.5).abs() < 1e-15);
        assert!((scene.distance([0.0, 0.0]) + 1.0).abs() < 1e-15);
    }

    #[test]
    fn gradient_points_away_from_closest_obstacle() {
        let scene = SdfScene::new(vec![
            Circle { center: [0.0, 0.0], radius: 1.0 },
            Circle { center: [10.0, 0.0], radius: 1.0 },
        ]);
        let (d, g) = scene.distance_and_gradient([2.0, 0.0]);
        assert!((d - 1.0).abs() < 1e-15);
        assert_eq!(g, [1.0, 0.0]);
        let (_, g) = scene.distance_and_gradient([9.0, 0.0]);
        assert_eq!(g, [-1.0, 0.0]);
    }

    #[test]
    fn tie_breaks_toward_lower_index_and_center_has_zero_gradient() {
        let scene = SdfScene::new(vec![
            Circle { center: [-1.0, 0.0], radius: 1.0 },
            Circle { center: [1.0, 0.0], radius: 1.0 },
        ]);
        // Equidistant point: strict `<` keeps the first obstacle.
        let (_, g) = scene.distance_and_gradient([0.0, 0.0]);
        assert_eq!(g, [1.0, 0.0]);
        let (_, g) = scene.distance_and_gradient([-1.0, 0.0]);
        assert_eq!(g, [0.0, 0.0]);
    }
}
