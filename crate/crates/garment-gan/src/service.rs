//! Frozen-model handle and the HTTP editing API.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use garment_gan_core::data::{AttributeSchema, AttributeVector, Dataset, Image};
use garment_gan_core::models::{DiscCls, Generator, ModelConfig};
use garment_gan_core::nn::Mode;
use garment_gan_core::tensor::{Shape, Tensor};
use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;

use crate::checkpoint::{digest_bytes, load_checkpoint};
use crate::error::{io_err, Error, Result};
use crate::png::{decode_square, encode_png};

/// Immutable inference handle over one checkpoint.
pub struct ModelHandle {
    pub schema: AttributeSchema,
    pub config: ModelConfig,
    pub digest: String,
    generator: Generator<f32>,
    classifier: DiscCls<f32>,
}

impl ModelHandle {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(io_err(path))?;
        let ckpt = load_checkpoint(path)?;
        Ok(Self {
            schema: ckpt.schema,
            config: ckpt.config.model,
            digest: digest_bytes(&bytes),
            generator: ckpt.state.generator,
            classifier: ckpt.state.disc,
        })
    }

    pub fn generator(&self) -> &Generator<f32> {
        &self.generator
    }

    fn tensor(&self, image: &Image) -> Tensor<f32> {
        let s = self.config.image_size;
        let mut x = Tensor::zeros(Shape::new(1, 3, s, s));
        image.write_chw(x.item_mut(0));
        x
    }

    /// Decodes, center-crops and resizes uploaded bytes to model size.
    pub fn prepare(&self, png: &[u8]) -> Result<Image> {
        let s = self.config.image_size;
        let rgb = decode_square(png, s)?;
        Ok(Image::from_rgb8(s, s, &rgb)?)
    }

    /// Source attributes predicted by the model's classifier head.
    pub fn infer_attributes(&self, image: &Image) -> Result<AttributeVector> {
        let probs = self.classifier.classify(&self.tensor(image))?;
        Ok(AttributeVector::from_bools(
            &probs.data().iter().map(|&p| p > 0.5).collect::<Vec<_>>(),
        ))
    }

    /// `decode(encode(x), b)` as an image.
    pub fn edit_image(&self, image: &Image, target: &AttributeVector) -> Result<Image> {
        target.check_arity(&self.schema)?;
        let out = self
            .generator
            .edit(&self.tensor(image), std::slice::from_ref(target), Mode::Eval)?;
        Ok(Image::from_tensor_item(&out, 0))
    }

    /// Resolves a request's target against `source`.
    pub fn resolve(&self, source: &AttributeVector, target: &TargetAttrs) -> Result<AttributeVector, ApiError> {
        match target {
            TargetAttrs::Full(bits) => {
                let v = AttributeVector::new(bits.clone()).map_err(|e| ApiError::bad(e.to_string()))?;
                v.check_arity(&self.schema).map_err(|e| ApiError::bad(e.to_string()))?;
                Ok(v)
            }
            TargetAttrs::Sparse(map) => {
                for name in map.keys() {
                    if self.schema.index_of(name).is_err() {
                        return Err(ApiError::unknown_attribute(name));
                    }
                }
                for group in self.schema.exclusive_groups() {
                    let members = &self.schema.groups()[group];
                    let on: Vec<&String> = members.iter().filter(|m| map.get(*m) == Some(&1)).collect();
                    if on.len() > 1 {
                        return Err(ApiError::bad(format!(
                            "{on:?} are mutually exclusive in group `{group}`"
                        )));
                    }
                }
                // zeros first so a set bit's peer clearing is not undone
                let mut overrides: Vec<(String, u8)> = map.iter().map(|(k, &v)| (k.clone(), v)).collect();
                overrides.sort_by_key(|(_, v)| *v);
                source
                    .with_overrides(&self.schema, &overrides)
                    .map_err(|e| ApiError::bad(e.to_string()))
            }
        }
    }
}

/// Full target vector or named overrides of the source attributes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TargetAttrs {
    Full(Vec<u8>),
    Sparse(BTreeMap<String, u8>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EditRequest {
    /// Base64 PNG; alternative to `id`.
    #[serde(default)]
    pub image: Option<String>,
    /// Gallery item id; alternative to `image`.
    #[serde(default)]
    pub id: Option<String>,
    pub target_attrs: TargetAttrs,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EditResponse {
    pub image: String,
    pub width: usize,
    pub height: usize,
    pub source_attrs: Vec<u8>,
    pub resolved_attrs: Vec<u8>,
    pub resolved: BTreeMap<String, u8>,
    pub checkpoint_digest: String,
    pub latency_ms: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReconstructRequest {
    #[serde(default)]
    pub image: Option<String>,
    #[serde(default)]
    pub id: Option<String>,
}

/// Error body: `{"error": ..., "attribute": ...}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: u16,
    pub error: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attribute: Option<String>,
}

impl ApiError {
    fn bad(msg: impl Into<String>) -> Self {
        Self {
            status: 400,
            error: msg.into(),
            attribute: None,
        }
    }

    fn unknown_attribute(name: &str) -> Self {
        Self {
            status: 400,
            error: format!("unknown attribute `{name}`"),
            attribute: Some(name.into()),
        }
    }

    fn internal(msg: impl Into<String>) -> Self {
        Self {
            status: 500,
            error: msg.into(),
            attribute: None,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        match e {
            Error::Image(_) | Error::Core(_) => ApiError::bad(e.to_string()),
            other => ApiError::internal(other.to_string()),
        }
    }
}

/// Shared service state.
pub struct AppState {
    pub handle: ModelHandle,
    pub gallery: Option<Dataset>,
    workers: Semaphore,
}

impl AppState {
    pub fn new(handle: ModelHandle, gallery: Option<Dataset>, workers: usize) -> Result<Self> {
        if let Some(g) = &gallery {
            if g.schema().names() != handle.schema.names() {
                return Err(Error::Usage("gallery schema differs from the checkpoint's".into()));
            }
            if g.image_size() != (handle.config.image_size, handle.config.image_size) {
                return Err(Error::Usage("gallery image size differs from the model's".into()));
            }
        }
        Ok(Self {
            handle,
            gallery,
            workers: Semaphore::new(workers.max(1)),
        })
    }

    /// Source image and attributes for a request.
    fn source(&self, image: &Option<String>, id: &Option<String>) -> Result<(Image, AttributeVector), ApiError> {
        match (image, id) {
            (Some(_), Some(_)) => Err(ApiError::bad("give either `image` or `id`, not both")),
            (None, None) => Err(ApiError::bad("one of `image` or `id` is required")),
            (None, Some(id)) => {
                let item = self.gallery.as_ref().and_then(|g| g.find(id)).ok_or_else(|| ApiError {
                    status: 404,
                    error: format!("no gallery item `{id}`"),
                    attribute: None,
                })?;
                Ok((item.pixels.clone(), item.attrs.clone()))
            }
            (Some(b64), None) => {
                let bytes = B64
                    .decode(b64.trim())
                    .map_err(|e| ApiError::bad(format!("image is not base64: {e}")))?;
                let img = self.handle.prepare(&bytes)?;
                let attrs = self.handle.infer_attributes(&img)?;
                Ok((img, attrs))
            }
        }
    }

    /// The edit operation behind `POST /edit`; a pure function of the
    /// request apart from the reported latency.
    pub fn edit(&self, req: &EditRequest) -> Result<EditResponse, ApiError> {
        let start = Instant::now();
        let (img, source) = self.source(&req.image, &req.id)?;
        let target = self.handle.resolve(&source, &req.target_attrs)?;
        let out = self.handle.edit_image(&img, &target)?;
        self.respond(&out, &source, &target, start)
    }

    pub fn reconstruct(&self, req: &ReconstructRequest) -> Result<EditResponse, ApiError> {
        let start = Instant::now();
        let (img, source) = self.source(&req.image, &req.id)?;
        let out = self.handle.edit_image(&img, &source)?;
        self.respond(&out, &source, &source, start)
    }

    fn respond(
        &self,
        out: &Image,
        source: &AttributeVector,
        target: &AttributeVector,
        start: Instant,
    ) -> Result<EditResponse, ApiError> {
        let png = encode_png(out.width(), out.height(), &out.to_rgb8())?;
        let resolved = self
            .handle
            .schema
            .names()
            .iter()
            .cloned()
            .zip(target.bits().iter().copied())
            .collect();
        Ok(EditResponse {
            image: B64.encode(png),
            width: out.width(),
            height: out.height(),
            source_attrs: source.bits().to_vec(),
            resolved_attrs: target.bits().to_vec(),
            resolved,
            checkpoint_digest: self.handle.digest.clone(),
            latency_ms: start.elapsed().as_secs_f64() * 1e3,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttributesResponse {
    pub attributes: Vec<String>,
    pub groups: BTreeMap<String, Vec<String>>,
    pub exclusive: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GalleryItem {
    pub id: String,
    pub attrs: Vec<u8>,
    pub thumbnail: String,
}

async fn run_blocking<T: Send + 'static>(
    state: Arc<AppState>,
    f: impl FnOnce(&AppState) -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    let _permit = state
        .workers
        .acquire()
        .await
        .map_err(|_| ApiError::internal("service is shutting down"))?;
    let s = state.clone();
    tokio::task::spawn_blocking(move || f(&s))
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

async fn health(State(state): State<Arc<AppState>>) -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok", "checkpoint_digest": state.handle.digest }))
}

async fn attributes(State(state): State<Arc<AppState>>) -> Json<AttributesResponse> {
    let s = &state.handle.schema;
    Json(AttributesResponse {
        attributes: s.names().to_vec(),
        groups: s.groups().clone(),
        exclusive: s.exclusive_groups().iter().cloned().collect(),
    })
}

async fn gallery(State(state): State<Arc<AppState>>) -> Result<Json<Vec<GalleryItem>>, ApiError> {
    run_blocking(state, |s| {
        let Some(g) = &s.gallery else { return Ok(Vec::new()) };
        g.items()
            .iter()
            .map(|it| {
                let png = encode_png(it.pixels.width(), it.pixels.height(), &it.pixels.to_rgb8())?;
                Ok(GalleryItem {
                    id: it.id.clone(),
                    attrs: it.attrs.bits().to_vec(),
                    thumbnail: B64.encode(png),
                })
            })
            .collect()
    })
    .await
    .map(Json)
}

async fn edit(
    State(state): State<Arc<AppState>>,
    Json(req): Json<EditRequest>,
) -> Result<Json<EditResponse>, ApiError> {
    run_blocking(state, move |s| s.edit(&req)).await.map(Json)
}

async fn reconstruct(
    State(state): State<Arc<AppState>>,
    Json(req): Json<ReconstructRequest>,
) -> Result<Json<EditResponse>, ApiError> {
    run_blocking(state, move |s| s.reconstruct(&req)).await.map(Json)
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/attributes", get(attributes))
        .route("/gallery", get(gallery))
        .route("/edit", post(edit))
        .route("/reconstruct", post(reconstruct))
        .with_state(state)
}

/// Serves until ctrl-c.
pub async fn serve(addr: &str, state: Arc<AppState>) -> Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await.map_err(io_err(addr))?;
    eprintln!("listening on {}", listener.local_addr().map_err(io_err(addr))?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(io_err(addr))
}
