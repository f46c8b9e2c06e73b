#pragma once

#include <memory>
#include <string>

#include "hpfp/net.hpp"

typedef struct x509_st X509;

namespace hpfp {

struct CertificateSummary {
    std::string subject_common_name;
    std::string subject_organization;
    std::string subject_country;
    std::string issuer_common_name;
    std::string issuer_organization;
    bool self_signed = false;

    // One "key=value" line per field; this is what certificate signatures see.
    std::string render() const;
    bool operator==(const CertificateSummary&) const = default;
};

CertificateSummary summarize_certificate(X509* cert);
// Leaf certificate of an established TLS connection.
std::optional<CertificateSummary> peer_certificate(const net::Conn& conn);

// Subject and issuer for a generated server certificate. An issuer that
// differs from the subject gives a certificate that is not self-signed by name.
struct CertSpec {
    std::string subject_cn;
    std::string subject_o;
    std::string subject_c;
    std::string issuer_cn;
    std::string issuer_o;
    std::string issuer_c;
    bool operator==(const CertSpec&) const = default;
};

// Server context with a freshly generated key and certificate.
std::shared_ptr<SSL_CTX> make_server_context(const CertSpec& spec);

}  // namespace hpfp
