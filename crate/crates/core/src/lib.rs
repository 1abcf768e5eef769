pub mod depmodel;
pub mod detector;
pub mod registry;
pub mod resolver;
pub mod scanner;
pub mod semver;
