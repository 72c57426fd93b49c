//! State machine shared by the line solver and the exhaustive oracle:
//! which states exist, which transitions are legal, and how ties break.

/// Role of a state in the path.
///
/// In strict mode an occluded state remembers the direction of its run:
/// `Inc`/`Dec` runs step the disparity by +1/-1 at every transition, from
/// the visible cell before the run to the visible cell after it, so the
/// jump across the run equals its length. `HomFirst`/`Hom` runs keep the
/// disparity fixed and span at least two cells, so every cell in them ends
/// up flagged homogeneous. `Occ` is the single occluded kind of the
/// unconstrained (six-neighbour) mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub(crate) enum Kind {
    Visible,
    Hom,
    HomFirst,
    Inc,
    Dec,
    Occ,
}

impl Kind {
    #[inline]
    pub(crate) fn occluded(self) -> bool {
        self != Kind::Visible
    }

    /// Position in the tie-break order among states sharing `(O, d)`.
    #[inline]
    pub(crate) fn order(self) -> u8 {
        match self {
            Kind::Visible => 0,
            Kind::Hom | Kind::Occ => 1,
            Kind::HomFirst => 2,
            Kind::Inc => 3,
            Kind::Dec => 4,
        }
    }
}

pub(crate) const STRICT_KINDS: [Kind; 5] = [Kind::Visible, Kind::Hom, Kind::HomFirst, Kind::Inc, Kind::Dec];
pub(crate) const LITERAL_KINDS: [Kind; 2] = [Kind::Visible, Kind::Occ];

pub(crate) fn kinds(strict: bool) -> &'static [Kind] {
    if strict {
        &STRICT_KINDS
    } else {
        &LITERAL_KINDS
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub(crate) struct State {
    pub kind: Kind,
    pub d: usize,
}

/// Whether a path may begin in `s` (validity of visible cells is checked by
/// the caller).
#[inline]
pub(crate) fn start_allowed(s: State) -> bool {
    s.kind != Kind::Hom
}

/// Legality of `prev -> cur` between consecutive columns.
pub(crate) fn transition_allowed(prev: State, cur: State) -> bool {
    let delta = cur.d as i64 - prev.d as i64;
    if delta.abs() > 1 {
        return false;
    }
    use Kind::*;
    match (prev.kind, cur.kind) {
        (Occ, Occ) | (Visible, Occ) | (Occ, Visible) => true,
        (Visible, Visible) => true,
        (Inc, Visible) | (Visible, Inc) | (Inc, Inc) => delta == 1,
        (Dec, Visible) | (Visible, Dec) | (Dec, Dec) => delta == -1,
        (Hom, Visible) | (Visible, HomFirst) => true,
        (HomFirst, Hom) | (Hom, Hom) => delta == 0,
        _ => false,
    }
}

/// Tie-break key when choosing the predecessor `prev` of `cur`: prefer a
/// visible predecessor, then the smaller disparity step, then the smaller
/// disparity, then the kind order.
#[inline]
pub(crate) fn transition_key(prev: State, cur: State) -> (u8, usize, usize, u8) {
    (
        prev.kind.occluded() as u8,
        prev.d.abs_diff(cur.d),
        prev.d,
        prev.kind.order(),
    )
}

/// Tie-break key among terminal states.
#[inline]
pub(crate) fn terminal_key(s: State) -> (u8, usize, usize, u8) {
    (s.kind.occluded() as u8, 0, s.d, s.kind.order())
}

/// `-ε` when both ends of a transition are occluded.
#[inline]
pub(crate) fn pair_cost(prev: State, cur: State, epsilon: f64) -> f64 {
    if prev.kind.occluded() && cur.kind.occluded() {
        -epsilon
    } else {
        0.0
    }
}
