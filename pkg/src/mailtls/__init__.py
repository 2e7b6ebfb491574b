"""mailtls — TLS support measurement toolkit for e-mail protocols.

Probes mail servers with one TLS handshake per (protocol version, cipher suite)
combination over STARTTLS (SMTP, Submission, POP3, IMAP) and implicit-TLS ports
(SMTPS, IMAPS, POP3S), then analyses the results: cipher and version statistics,
Diffie-Hellman and elliptic-curve parameters, certificate chain validation,
shared-prime and shared-RSA-factor detection, plaintext-authentication exposure,
and a pairwise cipher-compatibility ("cipher islands") model with policy what-ifs.
"""

__version__ = "0.1.0"
