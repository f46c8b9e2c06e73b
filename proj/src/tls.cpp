#include "hpfp/tls.hpp"

#include <openssl/evp.h>
#include <openssl/ssl.h>
#include <openssl/x509.h>

#include <stdexcept>

namespace hpfp {

namespace {

std::string name_entry(X509_NAME* name, int nid) {
    if (!name) return {};
    int idx = X509_NAME_get_index_by_NID(name, nid, -1);
    if (idx < 0) return {};
    ASN1_STRING* data = X509_NAME_ENTRY_get_data(X509_NAME_get_entry(name, idx));
    unsigned char* utf8 = nullptr;
    int len = ASN1_STRING_to_UTF8(&utf8, data);
    if (len < 0) return {};
    std::string out(reinterpret_cast<char*>(utf8), static_cast<std::size_t>(len));
    OPENSSL_free(utf8);
    return out;
}

void add_entry(X509_NAME* name, const char* field, const std::string& value) {
    if (value.empty()) return;
    X509_NAME_add_entry_by_txt(name, field, MBSTRING_UTF8,
                               reinterpret_cast<const unsigned char*>(value.c_str()), -1, -1, 0);
}

}  // namespace

std::string CertificateSummary::render() const {
    std::string out;
    out += "subject_cn=" + subject_common_name + "\n";
    out += "subject_o=" + subject_organization + "\n";
    out += "subject_c=" + subject_country + "\n";
    out += "issuer_cn=" + issuer_common_name + "\n";
    out += "issuer_o=" + issuer_organization + "\n";
    out += std::string("self_signed=") + (self_signed ? "true" : "false") + "\n";
    return out;
}

CertificateSummary summarize_certificate(X509* cert) {
    CertificateSummary s;
    X509_NAME* subject = X509_get_subject_name(cert);
    X509_NAME* issuer = X509_get_issuer_name(cert);
    s.subject_common_name = name_entry(subject, NID_commonName);
    s.subject_organization = name_entry(subject, NID_organizationName);
    s.subject_country = name_entry(subject, NID_countryName);
    s.issuer_common_name = name_entry(issuer, NID_commonName);
    s.issuer_organization = name_entry(issuer, NID_organizationName);
    s.self_signed = X509_NAME_cmp(subject, issuer) == 0;
    return s;
}

std::optional<CertificateSummary> peer_certificate(const net::Conn& conn) {
    if (!conn.ssl()) return std::nullopt;
    X509* cert = SSL_get1_peer_certificate(conn.ssl());
    if (!cert) return std::nullopt;
    auto s = summarize_certificate(cert);
    X509_free(cert);
    return s;
}

std::shared_ptr<SSL_CTX> make_server_context(const CertSpec& spec) {
    EVP_PKEY* key = EVP_EC_gen("P-256");
    if (!key) throw std::runtime_error("key generation failed");
    X509* cert = X509_new();
    X509_set_version(cert, 2);
    ASN1_INTEGER_set(X509_get_serialNumber(cert), 1);
    X509_gmtime_adj(X509_getm_notBefore(cert), -86400);
    X509_gmtime_adj(X509_getm_notAfter(cert), 86400L * 3650);
    X509_set_pubkey(cert, key);
    X509_NAME* subject = X509_get_subject_name(cert);
    add_entry(subject, "C", spec.subject_c);
    add_entry(subject, "O", spec.subject_o);
    add_entry(subject, "CN", spec.subject_cn);
    X509_NAME* issuer = X509_NAME_new();
    add_entry(issuer, "C", spec.issuer_c);
    add_entry(issuer, "O", spec.issuer_o);
    add_entry(issuer, "CN", spec.issuer_cn);
    X509_set_issuer_name(cert, issuer);
    X509_NAME_free(issuer);
    X509_sign(cert, key, EVP_sha256());

    SSL_CTX* ctx = SSL_CTX_new(TLS_server_method());
    SSL_CTX_use_certificate(ctx, cert);
    SSL_CTX_use_PrivateKey(ctx, key);
    X509_free(cert);
    EVP_PKEY_free(key);
    return std::shared_ptr<SSL_CTX>(ctx, SSL_CTX_free);
}

}  // namespace hpfp
