//! The abstract dialogue model: system and user intents, their coherent
//! transitions, and the six flow categories used for corpus mixing.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown {kind} `{name}`")]
pub struct UnknownName {
    pub kind: &'static str,
    pub name: String,
}

macro_rules! name_enum {
    ($(#[$meta:meta])* $ty:ident, $kind:literal, { $($variant:ident => $name:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum $ty {
            $($variant),+
        }

        impl $ty {
            pub const ALL: &'static [$ty] = &[$($ty::$variant),+];

            pub fn name(self) -> &'static str {
                match self {
                    $($ty::$variant => $name),+
                }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }

        impl FromStr for $ty {
            type Err = UnknownName;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                let norm = s.trim().to_lowercase().replace('-', "_");
                $ty::ALL
                    .iter()
                    .copied()
                    .find(|v| v.name() == norm)
                    .ok_or_else(|| UnknownName { kind: $kind, name: s.to_string() })
            }
        }
    };
}

name_enum!(
    /// System-side intents.
    SystemIntent, "system intent", {
        Start => "start",
        Inform => "inform",
        Nooffer => "nooffer",
        Select => "select",
        Recommend => "recommend",
        Request => "request",
        BookingRequest => "booking_request",
        BookingInform => "booking_inform",
        Offerbooked => "offerbooked",
        BookingBook => "booking_book",
        BookingNobook => "booking_nobook",
    }
);

name_enum!(
    /// User-side intents. `Select` is unrelated to [`SystemIntent::Select`].
    UserIntent, "user intent", {
        Inform => "inform",
        Update => "update",
        Reqmore => "reqmore",
        Confirm => "confirm",
        Book => "book",
        Recheck => "recheck",
        End => "end",
        Pick => "pick",
        Select => "select",
        Nobook => "nobook",
        NewDomain => "new_domain",
    }
);

name_enum!(
    FlowCategory, "flow category", {
        NewSlotValues => "new_slot_values",
        NoNewState => "no_new_state",
        Starter => "starter",
        Terminator => "terminator",
        UpdateExisting => "update_existing",
        RepeatOrDelete => "repeat_or_delete",
    }
);

name_enum!(
    Side, "side", {
        System => "system",
        User => "user",
    }
);

/// What an act carries besides its intent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActMode {
    /// domain, slot and value
    Full,
    /// domain and slot
    SlotOnly,
    /// domain only
    Bare,
}

/// An intent of either side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "side", content = "intent", rename_all = "snake_case")]
pub enum Intent {
    System(SystemIntent),
    User(UserIntent),
}

impl Intent {
    pub fn side(self) -> Side {
        match self {
            Intent::System(_) => Side::System,
            Intent::User(_) => Side::User,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Intent::System(i) => i.name(),
            Intent::User(i) => i.name(),
        }
    }

    pub fn parse(side: Side, name: &str) -> Result<Intent, UnknownName> {
        Ok(match side {
            Side::System => Intent::System(name.parse()?),
            Side::User => Intent::User(name.parse()?),
        })
    }

    pub fn mode(self) -> ActMode {
        match self {
            Intent::System(SystemIntent::Start) | Intent::User(UserIntent::Confirm) | Intent::User(UserIntent::End) => {
                ActMode::Bare
            }
            Intent::System(SystemIntent::Request)
            | Intent::System(SystemIntent::BookingRequest)
            | Intent::User(UserIntent::Reqmore) => ActMode::SlotOnly,
            _ => ActMode::Full,
        }
    }

    /// All 22 intents, system side first.
    pub fn all() -> impl Iterator<Item = Intent> {
        SystemIntent::ALL
            .iter()
            .map(|&i| Intent::System(i))
            .chain(UserIntent::ALL.iter().map(|&i| Intent::User(i)))
    }
}

impl fmt::Display for Intent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.side(), self.name())
    }
}

impl FlowCategory {
    /// Target share of a split in whole percent; sums to 100.
    pub fn percent(self) -> u64 {
        match self {
            FlowCategory::NewSlotValues => 50,
            FlowCategory::NoNewState => 15,
            FlowCategory::Starter => 10,
            FlowCategory::Terminator => 10,
            FlowCategory::UpdateExisting => 10,
            FlowCategory::RepeatOrDelete => 5,
        }
    }

    pub fn fraction(self) -> f64 {
        self.percent() as f64 / 100.0
    }

    /// Whether an intent pair realizes this category.
    pub fn admits(self, sys: SystemIntent, user: UserIntent) -> bool {
        use UserIntent as U;
        if self == FlowCategory::Starter {
            return sys == SystemIntent::Start;
        }
        if sys == SystemIntent::Start {
            return false;
        }
        match self {
            FlowCategory::Terminator => user == U::End,
            FlowCategory::NewSlotValues => {
                matches!(user, U::Inform | U::Book | U::Pick | U::Select | U::NewDomain)
            }
            FlowCategory::NoNewState => matches!(user, U::Confirm | U::Reqmore),
            FlowCategory::UpdateExisting => user == U::Update,
            FlowCategory::RepeatOrDelete => matches!(user, U::Recheck | U::Nobook),
            FlowCategory::Starter => unreachable!(),
        }
    }
}

/// User intents that coherently follow a system intent.
pub fn allowed_user_intents(sys: SystemIntent) -> &'static [UserIntent] {
    use SystemIntent as S;
    use UserIntent as U;
    match sys {
        S::Start => &[U::Inform],
        S::Inform => &[U::Inform, U::Update, U::Reqmore, U::Confirm, U::Book],
        S::Nooffer => &[U::Update, U::Recheck, U::End],
        S::Select => &[U::Pick, U::Update, U::Reqmore],
        S::Recommend => &[U::Select, U::Update, U::Reqmore],
        S::Request => &[U::Inform],
        S::BookingRequest => &[U::Inform],
        S::BookingInform => &[U::Book, U::Nobook, U::Update, U::Reqmore, U::Inform],
        S::Offerbooked => &[U::NewDomain, U::Confirm, U::End],
        S::BookingBook => &[U::NewDomain, U::Confirm, U::End],
        S::BookingNobook => &[U::NewDomain, U::Recheck, U::End],
    }
}

pub fn is_valid_transition(sys: SystemIntent, user: UserIntent) -> bool {
    allowed_user_intents(sys).contains(&user)
}

/// Every valid transition, ordered by (system name, user name).
pub fn enumerate_pairs() -> Vec<(SystemIntent, UserIntent)> {
    let mut pairs: Vec<_> = SystemIntent::ALL
        .iter()
        .flat_map(|&s| allowed_user_intents(s).iter().map(move |&u| (s, u)))
        .collect();
    pairs.sort_by_key(|(s, u)| (s.name(), u.name()));
    pairs
}

/// Valid transitions admitted by `category`, in [`enumerate_pairs`] order.
pub fn compatible_pairs(category: FlowCategory) -> Vec<(SystemIntent, UserIntent)> {
    enumerate_pairs()
        .into_iter()
        .filter(|&(s, u)| category.admits(s, u))
        .collect()
}

/// The unique category a valid transition belongs to.
pub fn category_of(sys: SystemIntent, user: UserIntent) -> FlowCategory {
    *FlowCategory::ALL
        .iter()
        .find(|c| c.admits(sys, user))
        .expect("every valid transition belongs to a category")
}

pub fn sample_intent_pair<R: Rng + ?Sized>(category: FlowCategory, rng: &mut R) -> (SystemIntent, UserIntent) {
    *compatible_pairs(category)
        .choose(rng)
        .expect("every category admits at least one pair")
}

/// Exportable view of the transition table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionTable {
    pub transitions: BTreeMap<SystemIntent, Vec<UserIntent>>,
}

impl TransitionTable {
    pub fn standard() -> Self {
        TransitionTable {
            transitions: SystemIntent::ALL
                .iter()
                .map(|&s| (s, allowed_user_intents(s).to_vec()))
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        let doc: BTreeMap<&str, Vec<&str>> = self
            .transitions
            .iter()
            .map(|(s, us)| (s.name(), us.iter().map(|u| u.name()).collect()))
            .collect();
        serde_json::to_string_pretty(&doc).expect("table serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from;
    use std::collections::HashSet;

    #[test]
    fn intent_sets_have_eleven_members() {
        assert_eq!(SystemIntent::ALL.len(), 11);
        assert_eq!(UserIntent::ALL.len(), 11);
        assert_eq!(Intent::all().count(), 22);
        let used: HashSet<UserIntent> = SystemIntent::ALL
            .iter()
            .flat_map(|&s| allowed_user_intents(s).iter().copied())
            .collect();
        assert_eq!(used.len(), 11);
    }

    #[test]
    fn table_rows() {
        use SystemIntent as S;
        use UserIntent as U;
        assert_eq!(
            allowed_user_intents(S::Inform),
            &[U::Inform, U::Update, U::Reqmore, U::Confirm, U::Book]
        );
        assert_eq!(allowed_user_intents(S::Start), &[U::Inform]);
        assert_eq!(
            allowed_user_intents(S::Offerbooked),
            &[U::NewDomain, U::Confirm, U::End]
        );
        assert!(is_valid_transition(S::Nooffer, U::Update));
        assert!(!is_valid_transition(S::Start, U::End));
        assert!(is_valid_transition(S::Request, U::Inform));
    }

    #[test]
    fn enumeration_matches_row_sizes() {
        let pairs = enumerate_pairs();
        let brute: usize = SystemIntent::ALL.iter().map(|&s| allowed_user_intents(s).len()).sum();
        assert_eq!(brute, 31);
        assert_eq!(pairs.len(), brute);
        assert_eq!(pairs.iter().collect::<HashSet<_>>().len(), pairs.len());
        assert_eq!(pairs[0], (SystemIntent::BookingBook, UserIntent::Confirm));
        assert!(pairs.contains(&(SystemIntent::Select, UserIntent::Pick)));
        assert!(pairs.iter().all(|&(s, u)| is_valid_transition(s, u)));
    }

    #[test]
    fn categories_partition_the_pairs() {
        let total: u64 = FlowCategory::ALL.iter().map(|c| c.percent()).sum();
        assert_eq!(total, 100);
        let sum: f64 = FlowCategory::ALL.iter().map(|c| c.fraction()).sum();
        assert!((sum - 1.0).abs() < 1e-12);
        let sizes: Vec<usize> = FlowCategory::ALL.iter().map(|&c| compatible_pairs(c).len()).collect();
        assert_eq!(sizes, [11, 7, 1, 4, 5, 3]);
        for (s, u) in enumerate_pairs() {
            let n = FlowCategory::ALL.iter().filter(|c| c.admits(s, u)).count();
            assert_eq!(n, 1, "({s}, {u}) in {n} categories");
        }
    }

    #[test]
    fn sampled_pairs_respect_category() {
        for seed in 0..200 {
            let (s, u) = sample_intent_pair(FlowCategory::Starter, &mut rng_from(seed, &[]));
            assert_eq!(s, SystemIntent::Start);
            assert!(is_valid_transition(s, u));
            let (s, u) = sample_intent_pair(FlowCategory::Terminator, &mut rng_from(seed, &[]));
            assert_eq!(u, UserIntent::End);
            assert!(is_valid_transition(s, u));
        }
        let a = sample_intent_pair(FlowCategory::NewSlotValues, &mut rng_from(9, &[]));
        let b = sample_intent_pair(FlowCategory::NewSlotValues, &mut rng_from(9, &[]));
        assert_eq!(a, b);
    }

    #[test]
    fn names_round_trip_and_modes() {
        for &s in SystemIntent::ALL {
            assert_eq!(s.name().parse::<SystemIntent>().unwrap(), s);
        }
        assert_eq!(
            "booking-request".parse::<SystemIntent>().unwrap(),
            SystemIntent::BookingRequest
        );
        assert!("bot".parse::<Side>().is_err());
        assert_eq!(Intent::System(SystemIntent::Request).mode(), ActMode::SlotOnly);
        assert_eq!(Intent::User(UserIntent::Reqmore).mode(), ActMode::SlotOnly);
        assert_eq!(Intent::User(UserIntent::Confirm).mode(), ActMode::Bare);
        assert_eq!(Intent::System(SystemIntent::Offerbooked).mode(), ActMode::Full);
    }

    #[test]
    fn exported_table_lists_every_row() {
        let json: BTreeMap<String, Vec<String>> = serde_json::from_str(&TransitionTable::standard().to_json()).unwrap();
        assert_eq!(json.len(), 11);
        assert_eq!(json["booking_nobook"], ["new_domain", "recheck", "end"]);
    }
}
