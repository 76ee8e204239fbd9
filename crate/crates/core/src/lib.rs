//! Sector-level analysis of spatiotemporal call and text volumes.

pub mod correlation;
pub mod error;
pub mod events;
pub mod fsio;
pub mod geodesy;
pub mod geom;
pub mod spectral;
pub mod stats;
pub mod synthgen;
pub mod tessellation;
pub mod volumes;

pub use error::{Error, Result};
pub use geodesy::{great_circle_km, latlon_to_utm, utm_to_latlon, Raster, TimeSpaceMap, UtmPoint};
pub use tessellation::{AntennaGroup, Sector, StudyArea, Tessellation, TowerSite};
pub use volumes::{AnomalyField, Channel, MinuteStats, Resolution, VolumeTensor};
