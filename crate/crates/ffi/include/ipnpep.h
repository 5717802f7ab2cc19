#ifndef IPNPEP_H
#define IPNPEP_H

/* Generated by cbindgen from crates/ffi; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Repair kind reported by [`ipnpep_encoder_repair_due`].
typedef enum IpnpepRepairKind {
  IPNPEP_REPAIR_KIND_NONE = 0,
  IPNPEP_REPAIR_KIND_NORMAL = 1,
  IPNPEP_REPAIR_KIND_TAIL = 2,
} IpnpepRepairKind;

// Result code of every fallible call.
typedef enum IpnpepStatus {
  IPNPEP_STATUS_OK = 0,
  IPNPEP_STATUS_NULL_POINTER = 1,
  IPNPEP_STATUS_INVALID_ARGUMENT = 2,
  IPNPEP_STATUS_BUFFER_TOO_SMALL = 3,
  // Nothing to return, e.g. no repair due or no delivered symbol queued.
  IPNPEP_STATUS_EMPTY = 4,
  IPNPEP_STATUS_MALFORMED_FRAME = 5,
  IPNPEP_STATUS_HIGH_WATER = 6,
  IPNPEP_STATUS_TAMPER = 7,
  IPNPEP_STATUS_REPLAY = 8,
  IPNPEP_STATUS_NO_KEY = 9,
  IPNPEP_STATUS_KEY_UPDATE_REQUIRED = 10,
  IPNPEP_STATUS_NUMERIC = 11,
  IPNPEP_STATUS_PANIC = 255,
} IpnpepStatus;

// Receiving half of one ALDE stream.
typedef struct IpnpepAldeReceiver IpnpepAldeReceiver;

// Sending half of one ALDE stream.
typedef struct IpnpepAldeSender IpnpepAldeSender;

// Sliding-window FEC decoder with a queue of delivered source symbols.
typedef struct IpnpepDecoder IpnpepDecoder;

// Sliding-window FEC encoder.
typedef struct IpnpepEncoder IpnpepEncoder;

// Queue model parameters; see [`ipnpep_queue_k_opt`].
typedef struct IpnpepQueueParams {
  double bw_in;
  double bw_out;
  double rtt_in;
  double rtt_out;
  uint32_t n_streams;
  double k_bytes;
  double packet_bytes;
} IpnpepQueueParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Static description of a status code. Never null.
const char *ipnpep_status_str(enum IpnpepStatus status);

// GF(2^8) coefficient for repair `k` and source `i`.
uint8_t ipnpep_gf_coefficient(uint64_t seed, uint64_t k, uint64_t i);

// # Safety
// `out` must be a valid pointer to a handle slot.
enum IpnpepStatus ipnpep_encoder_new(uint64_t seed,
                                     double delta,
                                     double initial_pe,
                                     struct IpnpepEncoder **out);

// # Safety
// `enc` must be null or a handle from [`ipnpep_encoder_new`] not yet freed.
void ipnpep_encoder_free(struct IpnpepEncoder *enc);

// Adds a source symbol and writes its wire frame.
//
// # Safety
// `payload` must point to `len` readable bytes and `out` to `cap` writable bytes.
enum IpnpepStatus ipnpep_encoder_source(struct IpnpepEncoder *enc,
                                        const uint8_t *payload,
                                        size_t len,
                                        uint8_t *out,
                                        size_t cap,
                                        size_t *out_len);

// Reports which repair, if any, the scheduling rule asks for.
//
// # Safety
// `enc` must be a live encoder handle and `kind` writable.
enum IpnpepStatus ipnpep_encoder_repair_due(struct IpnpepEncoder *enc,
                                            bool send_buffer_nonempty,
                                            enum IpnpepRepairKind *kind);

// Builds a repair frame of the given kind over the current window.
//
// # Safety
// `out` must point to `cap` writable bytes.
enum IpnpepStatus ipnpep_encoder_repair(struct IpnpepEncoder *enc,
                                        enum IpnpepRepairKind kind,
                                        uint8_t *out,
                                        size_t cap,
                                        size_t *out_len);

// Applies a cumulative acknowledgement up to and including `acked`.
//
// # Safety
// `enc` must be a live encoder handle.
enum IpnpepStatus ipnpep_encoder_ack(struct IpnpepEncoder *enc, uint64_t acked);

// Replaces the encoder's loss estimate.
//
// # Safety
// `enc` must be a live encoder handle.
enum IpnpepStatus ipnpep_encoder_set_loss(struct IpnpepEncoder *enc, double p_e);

// Fraction of sent frames that were repairs.
//
// # Safety
// `enc` must be a live encoder handle and `out` writable.
enum IpnpepStatus ipnpep_encoder_redundancy(struct IpnpepEncoder *enc, double *out);

// # Safety
// `out` must be a valid pointer to a handle slot.
enum IpnpepStatus ipnpep_decoder_new(uint64_t seed, size_t high_water, struct IpnpepDecoder **out);

// # Safety
// `dec` must be null or a handle from [`ipnpep_decoder_new`] not yet freed.
void ipnpep_decoder_free(struct IpnpepDecoder *dec);

// Feeds one wire frame. Source symbols that become available are queued for
// [`ipnpep_decoder_next`].
//
// # Safety
// `frame` must point to `len` readable bytes.
enum IpnpepStatus ipnpep_decoder_ingest(struct IpnpepDecoder *dec,
                                        const uint8_t *frame,
                                        size_t len);

// Pops the next delivered source symbol. Returns `IPNPEP_STATUS_EMPTY` when none is
// queued; on `IPNPEP_STATUS_BUFFER_TOO_SMALL` the symbol stays queued.
//
// # Safety
// `id` and `out_len` must be writable and `out` must point to `cap` bytes.
enum IpnpepStatus ipnpep_decoder_next(struct IpnpepDecoder *dec,
                                      uint64_t *id,
                                      uint8_t *out,
                                      size_t cap,
                                      size_t *out_len);

// Highest id below which every source has been delivered, or -1.
//
// # Safety
// `dec` must be a live decoder handle and `out` writable.
enum IpnpepStatus ipnpep_decoder_in_order(struct IpnpepDecoder *dec, int64_t *out);

// Sender for `stream_id` under an exporter secret.
//
// # Safety
// `secret` must point to `secret_len` readable bytes.
enum IpnpepStatus ipnpep_alde_sender_new(const uint8_t *secret,
                                         size_t secret_len,
                                         uint64_t stream_id,
                                         struct IpnpepAldeSender **out);

// # Safety
// `s` must be null or a live sender handle.
void ipnpep_alde_sender_free(struct IpnpepAldeSender *s);

// Writes the 32-byte key id that opens a stream.
//
// # Safety
// `out` must point to `cap` writable bytes.
enum IpnpepStatus ipnpep_alde_key_id(struct IpnpepAldeSender *s,
                                     uint8_t *out,
                                     size_t cap,
                                     size_t *out_len);

// Encrypts one block of at most 16384 bytes and writes its wire form.
//
// # Safety
// `plaintext` must point to `len` readable bytes and `out` to `cap` writable bytes.
enum IpnpepStatus ipnpep_alde_seal(struct IpnpepAldeSender *s,
                                   const uint8_t *plaintext,
                                   size_t len,
                                   uint8_t *out,
                                   size_t cap,
                                   size_t *out_len);

// Receiver for `stream_id` under an exporter secret.
//
// # Safety
// `secret` must point to `secret_len` readable bytes.
enum IpnpepStatus ipnpep_alde_receiver_new(const uint8_t *secret,
                                           size_t secret_len,
                                           uint64_t stream_id,
                                           struct IpnpepAldeReceiver **out);

// # Safety
// `r` must be null or a live receiver handle.
void ipnpep_alde_receiver_free(struct IpnpepAldeReceiver *r);

// Authenticates and decrypts one wire block.
//
// # Safety
// `block` must point to `len` readable bytes and `out` to `cap` writable bytes.
enum IpnpepStatus ipnpep_alde_open(struct IpnpepAldeReceiver *r,
                                   const uint8_t *block,
                                   size_t len,
                                   uint8_t *out,
                                   size_t cap,
                                   size_t *out_len);

// Per-stream buffer size in bytes that covers the bandwidth-delay product.
//
// # Safety
// `params` must be readable and `out` writable.
enum IpnpepStatus ipnpep_queue_k_opt(const struct IpnpepQueueParams *params, double *out);

// M/M/1/K utilisation at load `rho` with `k` slots.
//
// # Safety
// `out` must be writable.
enum IpnpepStatus ipnpep_queue_mm1k_utilisation(double rho, uint32_t k, double *out);

// M/D/1/K utilisation at load `rho` with `k` slots.
//
// # Safety
// `out` must be writable.
enum IpnpepStatus ipnpep_queue_md1k_utilisation(double rho, uint32_t k, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* IPNPEP_H */
