use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::PathBuf;

use clap::Parser;
use orality_core::stimulation::ConflictSettings;
use orality_core::LayoutParams;

/// Speech-first semantic canvas server.
///
/// Serves one websocket per session at `/ws?session=<id>`. Without
/// `--mock-providers` the chat, embedding and transcription services are read
/// from the `ORALITY_*` environment variables.
#[derive(Debug, Clone, Parser)]
#[command(name = "orality", version)]
pub struct Cli {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,

    #[arg(long, default_value_t = IpAddr::V4(Ipv4Addr::LOCALHOST))]
    pub host: IpAddr,

    /// Directory holding `<session>.orality.json` files; sessions are loaded
    /// from here and saved on every snapshot.
    #[arg(long)]
    pub session_dir: Option<PathBuf>,

    /// Also write every exported memo into this directory.
    #[arg(long)]
    pub export_dir: Option<PathBuf>,

    /// Use the deterministic offline providers.
    #[arg(long)]
    pub mock_providers: bool,

    /// Similarity a content must exceed to be pulled toward a foreign topic (default 0.3).
    #[arg(long)]
    pub layout_tau: Option<f64>,

    /// Distance of content nodes from their topic (default 160).
    #[arg(long)]
    pub radial_radius: Option<f64>,

    /// Largest move per refinement iteration (default 12).
    #[arg(long)]
    pub step_max: Option<f64>,

    /// Force-refinement iterations per update (default 30).
    #[arg(long)]
    pub iterations: Option<u32>,

    /// Scale applied to the summed forces (default 0.15).
    #[arg(long)]
    pub force_gain: Option<f64>,

    /// Content nodes closer than this repel each other (default 40).
    #[arg(long)]
    pub min_separation: Option<f64>,

    /// Half-width that projected topics are scaled into (default 500).
    #[arg(long)]
    pub canvas_extent: Option<f64>,

    /// Lowest model confidence (1-10) that becomes a conflict edge (default 6).
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=10))]
    pub conflict_floor: Option<u8>,

    /// Log filter, e.g. `info` or `orality_core=debug`.
    #[arg(long, default_value = "info")]
    pub log_level: String,
}

impl Cli {
    pub fn addr(&self) -> SocketAddr {
        SocketAddr::new(self.host, self.port)
    }

    /// Defaults overridden by any layout flag given; validated.
    pub fn layout_params(&self) -> Result<LayoutParams, String> {
        let d = LayoutParams::default();
        let p = LayoutParams {
            tau: self.layout_tau.unwrap_or(d.tau),
            radial_radius: self.radial_radius.unwrap_or(d.radial_radius),
            step_max: self.step_max.unwrap_or(d.step_max),
            iterations: self.iterations.unwrap_or(d.iterations),
            force_gain: self.force_gain.unwrap_or(d.force_gain),
            min_separation: self.min_separation.unwrap_or(d.min_separation),
            canvas_extent: self.canvas_extent.unwrap_or(d.canvas_extent),
        };
        p.validate().map_err(|e| e.to_string())?;
        Ok(p)
    }

    pub fn conflict_settings(&self) -> ConflictSettings {
        let mut s = ConflictSettings::default();
        if let Some(floor) = self.conflict_floor {
            s.confidence_floor = floor;
        }
        s
    }
}
