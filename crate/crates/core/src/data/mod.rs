//! Loading, projecting, cleaning and windowing raw location records, plus a
//! labelled synthetic corpus generator.

mod corpus;
mod load;
mod preprocess;
mod projection;
mod synth;
mod window;

pub use corpus::{read_corpus, read_corpus_file, write_corpus, write_corpus_file, CorpusRecord};
pub use load::{load, load_reader, LoadOptions, LoadReport, RawRecord, SourceFormat};
pub use preprocess::{preprocess, PreprocessConfig, PreprocessReport, Track};
pub use projection::{haversine_km, ProjectionSpec, EARTH_RADIUS_KM};
pub use synth::{random_walk_corpus, synth_corpus, SynthConfig};
pub use window::{split_key, window_and_split, CorpusConfig, Split, SplitReport};
