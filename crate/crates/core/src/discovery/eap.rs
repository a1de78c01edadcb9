use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{AuthError, EapMethod};
use crate::epc::auth::{self, Digest32, Nonce};
use crate::epc::{AuthVector, PasswordCredential};

/// A server certificate reduced to what the peer checks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Certificate {
    pub issuer: String,
    pub subject: String,
    pub valid: bool,
}

impl fmt::Display for Certificate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let validity = if self.valid { "valid" } else { "invalid" };
        write!(f, "{}:{}:{validity}", self.issuer, self.subject)
    }
}

impl FromStr for Certificate {
    type Err = String;

    /// `issuer:subject[:valid|invalid]`
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = s.split(':');
        let (Some(issuer), Some(subject)) = (parts.next(), parts.next()) else {
            return Err(format!("certificate `{s}` is not issuer:subject[:valid]"));
        };
        let valid = match parts.next() {
            None | Some("valid") => true,
            Some("invalid") => false,
            Some(other) => return Err(format!("unknown certificate validity `{other}`")),
        };
        if issuer.is_empty() || subject.is_empty() || parts.next().is_some() {
            return Err(format!("certificate `{s}` is not issuer:subject[:valid]"));
        }
        Ok(Certificate {
            issuer: issuer.to_string(),
            subject: subject.to_string(),
            valid,
        })
    }
}

/// Issuers a peer accepts server certificates from.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrustList {
    pub anchors: BTreeSet<String>,
}

impl TrustList {
    pub fn new<I: IntoIterator<Item = S>, S: Into<String>>(anchors: I) -> Self {
        Self {
            anchors: anchors.into_iter().map(Into::into).collect(),
        }
    }

    pub fn validate(&self, cert: &Certificate) -> Result<(), AuthError> {
        if cert.valid && self.anchors.contains(&cert.issuer) {
            Ok(())
        } else {
            Err(AuthError::CertificateInvalid)
        }
    }
}

/// Messages of both EAP methods as they cross the air interface.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum EapMessage {
    SimChallenge { nonce: Nonce },
    SimResponse { response: Digest32 },
    TtlsServerHello { certificate: Certificate },
    TtlsClientKeyExchange,
    TtlsTunnelEstablished,
    /// The only message that carries a password.
    TtlsInnerCredentials { username: String, password: String },
    Success,
    Failure(AuthError),
    PeerAbort(AuthError),
}

impl EapMessage {
    pub fn carries_password(&self) -> bool {
        matches!(self, EapMessage::TtlsInnerCredentials { .. })
    }
}

impl fmt::Debug for EapMessage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EapMessage::SimChallenge { nonce } => write!(f, "SimChallenge({nonce})"),
            EapMessage::SimResponse { response } => {
                write!(f, "SimResponse({})", hex::encode(response))
            }
            EapMessage::TtlsServerHello { certificate } => {
                write!(f, "TtlsServerHello({certificate})")
            }
            EapMessage::TtlsClientKeyExchange => f.write_str("TtlsClientKeyExchange"),
            EapMessage::TtlsTunnelEstablished => f.write_str("TtlsTunnelEstablished"),
            EapMessage::TtlsInnerCredentials { username, .. } => {
                write!(f, "TtlsInnerCredentials({username}, password=<redacted>)")
            }
            EapMessage::Success => f.write_str("EapSuccess"),
            EapMessage::Failure(e) => write!(f, "EapFailure({e:?})"),
            EapMessage::PeerAbort(e) => write!(f, "EapPeerAbort({e:?})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthSuccess {
    pub method: EapMethod,
    pub nonce: Nonce,
    pub session_key: Digest32,
}

/// What a SIM answers to a challenge.
pub fn sim_peer_response(key: &[u8], nonce: &Nonce) -> Digest32 {
    auth::challenge_response(key, nonce)
}

/// Authenticator side of EAP-SIM, built from one HSS vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimServer {
    nonce: Nonce,
    expected: Digest32,
    session_key: Digest32,
}

impl SimServer {
    pub fn new(vector: &AuthVector) -> Result<Self, AuthError> {
        match (vector.expected_response, vector.session_key) {
            (Some(expected), Some(session_key)) => Ok(Self {
                nonce: vector.nonce,
                expected,
                session_key,
            }),
            _ => Err(AuthError::MethodUnavailable),
        }
    }

    pub fn challenge(&self) -> EapMessage {
        EapMessage::SimChallenge { nonce: self.nonce }
    }

    pub fn verify(&self, response: &Digest32) -> Result<AuthSuccess, AuthError> {
        if *response == self.expected {
            Ok(AuthSuccess {
                method: EapMethod::Sim,
                nonce: self.nonce,
                session_key: self.session_key,
            })
        } else {
            Err(AuthError::AuthenticationFailed)
        }
    }
}

/// One complete EAP-SIM exchange between a peer holding `peer_key` and an
/// authenticator holding `vector`.
pub fn eap_sim_authenticate(
    peer_key: Option<&[u8]>,
    vector: &AuthVector,
) -> Result<AuthSuccess, AuthError> {
    let server = SimServer::new(vector)?;
    let key = peer_key.ok_or(AuthError::MethodUnavailable)?;
    let EapMessage::SimChallenge { nonce } = server.challenge() else {
        unreachable!("SIM server always opens with a challenge");
    };
    server.verify(&sim_peer_response(key, &nonce))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PeerState {
    AwaitHello,
    AwaitTunnel,
    InTunnel,
    Done,
}

/// EAP-TTLS supplicant. Credentials leave only from inside an established
/// tunnel; a rejected certificate ends the exchange.
#[derive(Debug, Clone)]
pub struct TtlsPeer {
    trust: TrustList,
    credential: Option<PasswordCredential>,
    state: PeerState,
}

impl TtlsPeer {
    pub fn new(trust: TrustList, credential: Option<PasswordCredential>) -> Self {
        Self {
            trust,
            credential,
            state: PeerState::AwaitHello,
        }
    }

    pub fn is_done(&self) -> bool {
        self.state == PeerState::Done
    }

    /// Reacts to one server message. `Ok(Some(reply))` continues the
    /// exchange, `Ok(None)` means success, `Err` means the peer gives up
    /// (and should tell the server with [`EapMessage::PeerAbort`]).
    pub fn on_message(&mut self, msg: &EapMessage) -> Result<Option<EapMessage>, AuthError> {
        let result = match (self.state, msg) {
            (PeerState::AwaitHello, EapMessage::TtlsServerHello { certificate }) => {
                if self.credential.is_none() {
                    Err(AuthError::MethodUnavailable)
                } else {
                    self.trust.validate(certificate).map(|()| {
                        self.state = PeerState::AwaitTunnel;
                        Some(EapMessage::TtlsClientKeyExchange)
                    })
                }
            }
            (PeerState::AwaitTunnel, EapMessage::TtlsTunnelEstablished) => {
                let cred = self.credential.as_ref().expect("checked at hello");
                self.state = PeerState::InTunnel;
                Ok(Some(EapMessage::TtlsInnerCredentials {
                    username: cred.username.clone(),
                    password: cred.password.clone(),
                }))
            }
            (PeerState::InTunnel, EapMessage::Success) => {
                self.state = PeerState::Done;
                Ok(None)
            }
            (_, EapMessage::Failure(e)) => Err(*e),
            _ => Err(AuthError::AuthenticationFailed),
        };
        if result.is_err() {
            self.state = PeerState::Done;
        }
        result
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ServerState {
    Hello,
    Tunnel,
    Done,
}

/// EAP-TTLS authenticator.
#[derive(Debug, Clone)]
pub struct TtlsServer {
    certificate: Certificate,
    expected: PasswordCredential,
    nonce: Nonce,
    state: ServerState,
}

/// Server reaction to one peer message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServerStep {
    pub reply: Option<EapMessage>,
    pub outcome: Option<Result<AuthSuccess, AuthError>>,
}

impl TtlsServer {
    pub fn new(certificate: Certificate, vector: &AuthVector) -> Result<Self, AuthError> {
        let expected = vector
            .profile
            .password_credential
            .clone()
            .ok_or(AuthError::MethodUnavailable)?;
        Ok(Self {
            certificate,
            expected,
            nonce: vector.nonce,
            state: ServerState::Hello,
        })
    }

    pub fn hello(&self) -> EapMessage {
        EapMessage::TtlsServerHello {
            certificate: self.certificate.clone(),
        }
    }

    pub fn on_message(&mut self, msg: &EapMessage) -> ServerStep {
        let fail = |e| ServerStep {
            reply: Some(EapMessage::Failure(e)),
            outcome: Some(Err(e)),
        };
        let step = match (self.state, msg) {
            (ServerState::Hello, EapMessage::TtlsClientKeyExchange) => {
                self.state = ServerState::Tunnel;
                return ServerStep {
                    reply: Some(EapMessage::TtlsTunnelEstablished),
                    outcome: None,
                };
            }
            (ServerState::Tunnel, EapMessage::TtlsInnerCredentials { username, password }) => {
                if *username == self.expected.username && *password == self.expected.password {
                    ServerStep {
                        reply: Some(EapMessage::Success),
                        outcome: Some(Ok(AuthSuccess {
                            method: EapMethod::Ttls,
                            nonce: self.nonce,
                            session_key: auth::session_key(password.as_bytes(), &self.nonce),
                        })),
                    }
                } else {
                    fail(AuthError::AuthenticationFailed)
                }
            }
            (_, EapMessage::PeerAbort(e)) => ServerStep {
                reply: None,
                outcome: Some(Err(*e)),
            },
            _ => fail(AuthError::AuthenticationFailed),
        };
        self.state = ServerState::Done;
        step
    }
}

/// Runs a TTLS exchange to completion and returns the outcome together with
/// every message exchanged, in order.
pub fn eap_ttls_authenticate(
    peer: &mut TtlsPeer,
    server: &mut TtlsServer,
) -> (Result<AuthSuccess, AuthError>, Vec<EapMessage>) {
    let mut transcript = vec![server.hello()];
    loop {
        let last = transcript.last().expect("non-empty").clone();
        match peer.on_message(&last) {
            Ok(Some(reply)) => {
                transcript.push(reply.clone());
                let step = server.on_message(&reply);
                if let Some(r) = step.reply {
                    transcript.push(r);
                }
                if let Some(outcome) = step.outcome {
                    if let Some(last) = transcript.last().cloned() {
                        // Let the peer see the verdict so its state settles.
                        let _ = peer.on_message(&last);
                    }
                    return (outcome, transcript);
                }
            }
            Ok(None) => unreachable!("server reports success before the peer sees it"),
            Err(e) => {
                let abort = EapMessage::PeerAbort(e);
                transcript.push(abort.clone());
                let _ = server.on_message(&abort);
                return (Err(e), transcript);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::RngStreams;
    use crate::epc::{Hss, Imsi, SubscriberProfile};
    use sha2::{Digest, Sha256};

    fn imsi() -> Imsi {
        "001010000000001".parse().unwrap()
    }

    fn hss_with(key: Option<&[u8]>, password: Option<(&str, &str)>) -> Hss {
        let mut hss = Hss::new(RngStreams::new(3).stream("hss"));
        let cred = password.map(|(u, p)| PasswordCredential {
            username: u.into(),
            password: p.into(),
        });
        hss.register(SubscriberProfile::new(imsi(), key.map(<[u8]>::to_vec), cred).unwrap())
            .unwrap();
        hss
    }

    fn cert(valid: bool) -> Certificate {
        Certificate {
            issuer: "root".into(),
            subject: "aaa.home.example".into(),
            valid,
        }
    }

    #[test]
    fn sim_success_session_key_recomputes() {
        let mut hss = hss_with(Some(b"secret"), None);
        let v = hss.auth_vector(&imsi()).unwrap();
        let ok = eap_sim_authenticate(Some(b"secret"), &v).unwrap();
        // Independent recomputation of SHA-256(key ‖ nonce ‖ "session").
        let mut h = Sha256::new();
        h.update(b"secret");
        h.update(v.nonce.0);
        h.update(b"session");
        let expect: [u8; 32] = h.finalize().into();
        assert_eq!(ok.session_key, expect);
    }

    #[test]
    fn sim_wrong_key_fails() {
        let mut hss = hss_with(Some(b"secret"), None);
        let v = hss.auth_vector(&imsi()).unwrap();
        assert_eq!(
            eap_sim_authenticate(Some(b"guess"), &v),
            Err(AuthError::AuthenticationFailed)
        );
    }

    #[test]
    fn sim_needs_a_sim() {
        let mut hss = hss_with(None, Some(("u", "p")));
        let v = hss.auth_vector(&imsi()).unwrap();
        assert_eq!(eap_sim_authenticate(None, &v), Err(AuthError::MethodUnavailable));
    }

    fn ttls(valid: bool, password: &str) -> (Result<AuthSuccess, AuthError>, Vec<EapMessage>) {
        let mut hss = hss_with(None, Some(("alice", "pw")));
        let v = hss.auth_vector(&imsi()).unwrap();
        let mut server = TtlsServer::new(cert(valid), &v).unwrap();
        let mut peer = TtlsPeer::new(
            TrustList::new(["root"]),
            Some(PasswordCredential {
                username: "alice".into(),
                password: password.into(),
            }),
        );
        eap_ttls_authenticate(&mut peer, &mut server)
    }

    #[test]
    fn ttls_happy_path_tunnel_first() {
        let (r, t) = ttls(true, "pw");
        assert_eq!(r.unwrap().method, EapMethod::Ttls);
        let tunnel = t.iter().position(|m| *m == EapMessage::TtlsTunnelEstablished).unwrap();
        let pw = t.iter().position(EapMessage::carries_password).unwrap();
        assert!(tunnel < pw);
    }

    #[test]
    fn ttls_bad_certificate_never_sends_password() {
        let (r, t) = ttls(false, "pw");
        assert_eq!(r, Err(AuthError::CertificateInvalid));
        assert!(!t.iter().any(EapMessage::carries_password));
    }

    #[test]
    fn ttls_wrong_password() {
        let (r, _) = ttls(true, "nope");
        assert_eq!(r, Err(AuthError::AuthenticationFailed));
    }

    #[test]
    fn untrusted_issuer_is_invalid() {
        let trust = TrustList::new(["other"]);
        assert_eq!(trust.validate(&cert(true)), Err(AuthError::CertificateInvalid));
        assert_eq!("root:aaa:valid".parse::<Certificate>().unwrap().subject, "aaa");
        assert!(!"root:aaa:invalid".parse::<Certificate>().unwrap().valid);
    }
}
