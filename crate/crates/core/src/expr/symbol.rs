use std::fmt;

/// Grassmann parity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn is_odd(self) -> bool {
        self == Parity::Odd
    }

    pub fn from_odd(odd: bool) -> Self {
        if odd {
            Parity::Odd
        } else {
            Parity::Even
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Parity::Even => Parity::Odd,
            Parity::Odd => Parity::Even,
        }
    }
}

/// Symbol families of the extended phase space.
///
/// Variant order matters: together with the jet order it fixes the global
/// ordering of odd symbols in normal forms (ghosts, then coordinate
/// antifields, then their time derivatives).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    Ghost,
    CoordStar,
    Coord,
    Momentum,
    GhostStar,
    AuxEven,
    AuxOdd,
}

impl Family {
    pub fn parity(self) -> Parity {
        match self {
            Family::Ghost | Family::CoordStar | Family::AuxOdd => Parity::Odd,
            _ => Parity::Even,
        }
    }

    /// Families that carry time dependence (have jet prolongations).
    pub fn is_dynamical(self) -> bool {
        matches!(
            self,
            Family::Coord | Family::Ghost | Family::CoordStar | Family::GhostStar
        )
    }

    pub fn ghost_number(self) -> i32 {
        match self {
            Family::Ghost => 1,
            Family::CoordStar => -1,
            Family::GhostStar => -2,
            _ => 0,
        }
    }

    pub fn antighost_number(self) -> u32 {
        match self {
            Family::CoordStar => 1,
            Family::GhostStar => 2,
            _ => 0,
        }
    }

    pub fn prefix(self) -> &'static str {
        match self {
            Family::Coord => "q",
            Family::Momentum => "p",
            Family::Ghost => "c",
            Family::CoordStar => "qs",
            Family::GhostStar => "cs",
            Family::AuxEven => "u",
            Family::AuxOdd => "v",
        }
    }

    pub const DYNAMICAL: [Family; 4] = [
        Family::Coord,
        Family::Ghost,
        Family::CoordStar,
        Family::GhostStar,
    ];
}

/// A variable: family, jet order (number of time derivatives) and index.
///
/// Indices of the named families are 1-based. Auxiliary symbols use the
/// index as an identifier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Symbol {
    jet: u8,
    family: Family,
    index: u32,
}

impl Symbol {
    pub fn new(family: Family, jet: u8, index: u32) -> Self {
        debug_assert!(jet == 0 || family.is_dynamical());
        Symbol { jet, family, index }
    }

    pub fn q(i: u32) -> Self {
        Symbol::new(Family::Coord, 0, i)
    }
    pub fn qd(i: u32) -> Self {
        Symbol::new(Family::Coord, 1, i)
    }
    pub fn qdd(i: u32) -> Self {
        Symbol::new(Family::Coord, 2, i)
    }
    pub fn p(i: u32) -> Self {
        Symbol::new(Family::Momentum, 0, i)
    }
    pub fn ghost(a: u32) -> Self {
        Symbol::new(Family::Ghost, 0, a)
    }
    pub fn qs(i: u32) -> Self {
        Symbol::new(Family::CoordStar, 0, i)
    }
    pub fn cs(a: u32) -> Self {
        Symbol::new(Family::GhostStar, 0, a)
    }
    pub fn aux(id: u32, parity: Parity) -> Self {
        match parity {
            Parity::Even => Symbol::new(Family::AuxEven, 0, id),
            Parity::Odd => Symbol::new(Family::AuxOdd, 0, id),
        }
    }

    pub fn family(self) -> Family {
        self.family
    }
    pub fn jet(self) -> u8 {
        self.jet
    }
    pub fn index(self) -> u32 {
        self.index
    }
    pub fn parity(self) -> Parity {
        self.family.parity()
    }
    pub fn is_odd(self) -> bool {
        self.parity().is_odd()
    }
    pub fn ghost_number(self) -> i32 {
        self.family.ghost_number()
    }
    pub fn antighost_number(self) -> u32 {
        self.family.antighost_number()
    }

    /// The time derivative of this symbol, `None` for non-dynamical families.
    pub fn derivative(self) -> Option<Symbol> {
        if self.family.is_dynamical() {
            Some(Symbol { jet: self.jet + 1, ..self })
        } else {
            None
        }
    }

    pub fn with_jet(self, jet: u8) -> Symbol {
        Symbol { jet, ..self }
    }

    /// True for the undifferentiated ghosts and antifields.
    pub fn is_sector(self) -> bool {
        self.jet == 0
            && matches!(
                self.family,
                Family::Ghost | Family::CoordStar | Family::GhostStar
            )
    }

    /// Parses a canonical name such as `q3`, `qdd1`, `cs2` or `qsd4`.
    /// Auxiliary prefixes are not recognised here.
    pub fn from_canonical(name: &str) -> Option<Symbol> {
        let digits_at = name.find(|c: char| c.is_ascii_digit())?;
        let (head, digits) = name.split_at(digits_at);
        if !digits.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        let index: u32 = digits.parse().ok()?;
        if index == 0 {
            return None;
        }
        for family in [
            Family::CoordStar,
            Family::GhostStar,
            Family::Coord,
            Family::Ghost,
            Family::Momentum,
        ] {
            if let Some(rest) = head.strip_prefix(family.prefix()) {
                if !rest.bytes().all(|b| b == b'd') {
                    continue;
                }
                let jet = rest.len();
                if jet > 0 && !family.is_dynamical() {
                    return None;
                }
                return Some(Symbol::new(family, u8::try_from(jet).ok()?, index));
            }
        }
        None
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.family.prefix())?;
        for _ in 0..self.jet {
            f.write_str("d")?;
        }
        write!(f, "{}", self.index)
    }
}
