//! Long-running MQTT services: connect, subscribe, handle messages one at a
//! time, publish replies, and reconnect with backoff when the link drops.

use std::future::Future;
use std::time::Duration;

use p1451_core::mqtt::{QoS, TopicFilter, TopicName, SUBACK_FAILURE};
use thiserror::Error;
use tokio::sync::watch;
use tokio::task::JoinHandle;
use tracing::{info, warn};

use crate::client::{ClientError, ClientOptions, Message, MqttClient};

pub const BACKOFF_START: Duration = Duration::from_millis(100);
pub const BACKOFF_MAX: Duration = Duration::from_secs(5);

/// Processes one inbound message and returns the QoS 1 publishes to send.
pub trait Handler: Send + 'static {
    fn handle(&mut self, msg: Message) -> impl Future<Output = Vec<(TopicName, Vec<u8>)>> + Send;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ServiceStatus {
    Starting,
    Ready,
    Failed(String),
}

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("connecting: {0}")]
    Connect(#[from] ClientError),
    #[error("subscription to {0} refused by broker")]
    SubscribeRefused(TopicFilter),
    #[error("service failed: {0}")]
    Failed(String),
    #[error("service stopped")]
    Stopped,
}

pub struct ServiceHandle {
    stop: watch::Sender<bool>,
    status: watch::Receiver<ServiceStatus>,
    task: JoinHandle<()>,
}

impl ServiceHandle {
    /// Resolves once the first subscription is in place, or with the error
    /// that made the first attempt fail.
    pub async fn ready(&mut self) -> Result<(), ServiceError> {
        loop {
            match &*self.status.borrow_and_update() {
                ServiceStatus::Ready => return Ok(()),
                ServiceStatus::Failed(e) => return Err(ServiceError::Failed(e.clone())),
                ServiceStatus::Starting => {}
            }
            self.status.changed().await.map_err(|_| ServiceError::Stopped)?;
        }
    }

    pub fn status(&self) -> ServiceStatus {
        self.status.borrow().clone()
    }

    pub async fn stop(self) {
        let _ = self.stop.send(true);
        let _ = self.task.await;
    }

    /// Completes when the service ends by itself, which only happens after a
    /// failed first attempt.
    pub async fn finished(&mut self) {
        let _ = (&mut self.task).await;
    }
}

/// Starts `handler` behind a client subscribed to `filter`.
///
/// Refusals during the very first attempt (bad credentials, denied
/// subscription) are fatal so misconfiguration surfaces at startup. After
/// the service has been ready once, every failure is retried.
pub fn spawn<H: Handler>(name: &'static str, opts: ClientOptions, filter: TopicFilter, handler: H) -> ServiceHandle {
    let (stop, stop_rx) = watch::channel(false);
    let (status_tx, status) = watch::channel(ServiceStatus::Starting);
    let task = tokio::spawn(run(name, opts, filter, handler, stop_rx, status_tx));
    ServiceHandle { stop, status, task }
}

async fn session<H: Handler>(
    opts: &ClientOptions,
    filter: &TopicFilter,
    handler: &mut H,
    stop: &mut watch::Receiver<bool>,
    status: &watch::Sender<ServiceStatus>,
    name: &'static str,
) -> Result<bool, ServiceError> {
    let (client, mut inbox) = MqttClient::connect(opts.clone()).await?;
    let code = client.subscribe(filter.clone(), QoS::AtLeastOnce).await?;
    if code == SUBACK_FAILURE {
        client.disconnect().await;
        return Err(ServiceError::SubscribeRefused(filter.clone()));
    }
    info!(event = "service_ready", service = name, topic = %filter);
    status.send_replace(ServiceStatus::Ready);
    loop {
        let msg = tokio::select! {
            m = inbox.recv() => m,
            _ = stop.changed() => {
                client.disconnect().await;
                return Ok(true);
            }
        };
        let Some(msg) = msg else { return Ok(false) };
        for (topic, payload) in handler.handle(msg).await {
            if let Err(e) = client.publish(topic.clone(), payload, QoS::AtLeastOnce).await {
                warn!(event = "publish_failed", service = name, topic = %topic, error = %e);
                return Ok(false);
            }
        }
    }
}

async fn run<H: Handler>(
    name: &'static str,
    opts: ClientOptions,
    filter: TopicFilter,
    mut handler: H,
    mut stop: watch::Receiver<bool>,
    status: watch::Sender<ServiceStatus>,
) {
    let mut backoff = BACKOFF_START;
    let mut ever_ready = false;
    loop {
        let outcome = session(&opts, &filter, &mut handler, &mut stop, &status, name).await;
        if status.borrow().eq(&ServiceStatus::Ready) {
            ever_ready = true;
            backoff = BACKOFF_START;
        }
        match outcome {
            Ok(true) => return,
            Ok(false) => warn!(event = "connection_lost", service = name),
            Err(e) => {
                let refused = match &e {
                    ServiceError::SubscribeRefused(_) => true,
                    ServiceError::Connect(c) => {
                        c.is_auth() || matches!(c, ClientError::Tls(_) | ClientError::Endpoint(_))
                    }
                    _ => false,
                };
                let fatal = refused && !ever_ready;
                warn!(event = "service_error", service = name, error = %e, fatal);
                if fatal {
                    status.send_replace(ServiceStatus::Failed(e.to_string()));
                    return;
                }
            }
        }
        if ever_ready {
            status.send_replace(ServiceStatus::Starting);
        }
        tokio::select! {
            _ = tokio::time::sleep(backoff) => {}
            _ = stop.changed() => return,
        }
        backoff = (backoff * 2).min(BACKOFF_MAX);
    }
}
