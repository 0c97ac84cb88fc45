//! Flat unknown vectors and the named slots inside them.
//!
//! Shared quantities (the gauge, each body's collision-time offset and
//! collision pose) occupy exactly one slot range, so pre- and post-collision
//! segments agree on them by construction.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Body {
    A,
    B,
}

impl Body {
    pub const BOTH: [Body; 2] = [Body::A, Body::B];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Body::A => "a",
            Body::B => "b",
        }
    }
}

/// One of the four ballistic segments of a two-body collision.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Segment {
    APre,
    APost,
    BPre,
    BPost,
}

impl Segment {
    pub const ALL: [Segment; 4] = [Segment::APre, Segment::APost, Segment::BPre, Segment::BPost];

    pub fn of(body: Body, post: bool) -> Segment {
        match (body, post) {
            (Body::A, false) => Segment::APre,
            (Body::A, true) => Segment::APost,
            (Body::B, false) => Segment::BPre,
            (Body::B, true) => Segment::BPost,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn body(self) -> Body {
        match self {
            Segment::APre | Segment::APost => Body::A,
            Segment::BPre | Segment::BPost => Body::B,
        }
    }

    pub fn is_post(self) -> bool {
        matches!(self, Segment::APost | Segment::BPost)
    }

    pub fn name(self) -> &'static str {
        match self {
            Segment::APre => "a_pre",
            Segment::APost => "a_post",
            Segment::BPre => "b_pre",
            Segment::BPost => "b_post",
        }
    }
}

/// Slot map of the 48-entry two-body unknown vector.
///
/// | slots  | content                                         |
/// |--------|-------------------------------------------------|
/// | 0      | `b1`                                            |
/// | 1, 2   | `beta_x`, `beta_y1`                             |
/// | 3..15  | per segment `b2`, `b3`, `beta_y0`               |
/// | 15..21 | collision-time offset `b4` of a, then b         |
/// | 21..33 | angular momentum `k` per segment                |
/// | 33..41 | collision pose `q_c` of a, then b (w, x, y, z)  |
/// | 41..44 | collision point `x_c`                           |
/// | 44..47 | impulse `j·n`                                   |
/// | 47     | mass ratio `m_b / m_a`                          |
pub struct UnknownLayout;

impl UnknownLayout {
    pub const B1: usize = 0;
    pub const BETA_X: usize = 1;
    pub const BETA_Y1: usize = 2;
    pub const COLLISION_POINT: usize = 41;
    pub const IMPULSE: usize = 44;
    pub const MASS_RATIO: usize = 47;
    pub const LEN: usize = 48;

    /// First of the `b2`, `b3`, `beta_y0` slots of a segment.
    pub const fn segment(s: Segment) -> usize {
        3 + 3 * s as usize
    }

    pub const fn offset(b: Body) -> usize {
        15 + 3 * b as usize
    }

    pub const fn momentum(s: Segment) -> usize {
        21 + 3 * s as usize
    }

    pub const fn pose(b: Body) -> usize {
        33 + 4 * b as usize
    }

    /// Human-readable name of every slot, in order.
    pub fn slot_names() -> Vec<String> {
        let mut n = vec!["b1".to_string(), "beta_x".into(), "beta_y1".into()];
        for s in Segment::ALL {
            for c in ["b2", "b3", "beta_y0"] {
                n.push(format!("{}.{c}", s.name()));
            }
        }
        for b in Body::BOTH {
            for c in ["x", "y", "z"] {
                n.push(format!("{}.b4.{c}", b.name()));
            }
        }
        for s in Segment::ALL {
            for c in ["x", "y", "z"] {
                n.push(format!("{}.k.{c}", s.name()));
            }
        }
        for b in Body::BOTH {
            for c in ["w", "x", "y", "z"] {
                n.push(format!("{}.q_c.{c}", b.name()));
            }
        }
        for p in ["x_c", "jn"] {
            for c in ["x", "y", "z"] {
                n.push(format!("{p}.{c}"));
            }
        }
        n.push("mass_ratio".into());
        n
    }
}

/// Slot map of the 26-entry single-body (static partner) unknown vector.
/// The impulse direction is the fixed plane normal, so only its magnitude
/// is unknown.
pub struct SingleBodyLayout;

impl SingleBodyLayout {
    pub const B1: usize = 0;
    pub const BETA_X: usize = 1;
    pub const BETA_Y1: usize = 2;
    pub const OFFSET: usize = 9;
    pub const POSE: usize = 18;
    pub const COLLISION_POINT: usize = 22;
    pub const IMPULSE: usize = 25;
    pub const LEN: usize = 26;

    pub const fn segment(post: bool) -> usize {
        3 + 3 * post as usize
    }

    pub const fn momentum(post: bool) -> usize {
        12 + 3 * post as usize
    }

    pub fn slot_names() -> Vec<String> {
        let mut n = vec!["b1".to_string(), "beta_x".into(), "beta_y1".into()];
        for s in ["pre", "post"] {
            for c in ["b2", "b3", "beta_y0"] {
                n.push(format!("{s}.{c}"));
            }
        }
        for c in ["x", "y", "z"] {
            n.push(format!("b4.{c}"));
        }
        for s in ["pre", "post"] {
            for c in ["x", "y", "z"] {
                n.push(format!("{s}.k.{c}"));
            }
        }
        for c in ["w", "x", "y", "z"] {
            n.push(format!("q_c.{c}"));
        }
        for c in ["x", "y", "z"] {
            n.push(format!("x_c.{c}"));
        }
        n.push("j".into());
        n
    }
}
