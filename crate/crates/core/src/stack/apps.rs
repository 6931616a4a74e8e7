use crate::session::{App, AppRequest, AppResponse};

pub const HELLO_BODY: &[u8] = b"hello from httpa2\n";

/// The reference application.
///
/// - `/echo` returns the request body, mirroring its protected regions, and
///   reflects `X-Client-Note` as `X-Echo-Note`.
/// - `/hello` answers with a fixed greeting.
/// - `/whoami` returns the base id the request arrived on, if any.
///
/// Anything else is a 404.
#[derive(Debug, Default, Clone, Copy)]
pub struct EchoApp;

impl App for EchoApp {
    fn handle(&self, req: &AppRequest) -> AppResponse {
        let path = req.target.split('?').next().unwrap_or_default();
        match path {
            "/echo" => {
                let mut resp = AppResponse::ok(req.body.clone());
                resp.regions = req.regions.clone();
                resp.headers.push(("Content-Type".into(), "application/octet-stream".into()));
                if let Some(note) = req
                    .headers
                    .iter()
                    .find(|f| f.is_named("X-Client-Note"))
                    .and_then(|f| f.value_str())
                {
                    resp.headers.push(("X-Echo-Note".into(), note.to_string()));
                }
                resp
            }
            "/hello" => {
                let mut resp = AppResponse::ok(HELLO_BODY);
                resp.headers.push(("Content-Type".into(), "text/plain".into()));
                resp
            }
            "/whoami" => AppResponse::ok(
                req.base_id
                    .as_deref()
                    .map(crate::wire::b64_encode)
                    .unwrap_or_else(|| "untrusted".into()),
            ),
            _ => AppResponse {
                status: 404,
                ..AppResponse::ok(Vec::new())
            },
        }
    }
}
