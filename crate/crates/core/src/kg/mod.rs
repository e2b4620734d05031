//! Vocabularies, triple storage, path instances and KBC examples.

mod dataset;
mod path;
mod store;
mod vocab;

pub use dataset::{preprocess_kbc, KbcDataset, KbcExample, KbcSplit, MAX_PATHS_PER_PAIR, MAX_PATH_LEN};
pub use path::{enhance_path, PathInstance};
pub use store::TripleStore;
pub use vocab::{inverse_token, is_inverse_token, Vocab, INVERSE_PREFIX, UNK_TOKEN};

macro_rules! id_type {
    ($(#[$m:meta])* $name:ident) => {
        $(#[$m])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(pub u32);

        impl $name {
            /// Reserved id for tokens outside the training vocabulary.
            pub const UNK: $name = $name(u32::MAX);

            pub fn index(self) -> usize {
                self.0 as usize
            }

            pub fn is_unk(self) -> bool {
                self == Self::UNK
            }
        }
    };
}

id_type!(
    /// Index into [`Vocab`]'s entity list.
    EntityId
);
id_type!(
    /// Index into [`Vocab`]'s relation list.
    RelationId
);
