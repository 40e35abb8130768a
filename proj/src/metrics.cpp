#include "smadd/metrics.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <system_error>

namespace smadd {

const char* const kMetricsHeader =
    "epoch,train_loss,test_loss,train_acc,test_acc,"
    "grad_E,grad_P,grad_q,grad_V,grad_W,grad_U,error_term,bound";

namespace {

void append_double(std::string& out, double x) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  out.append(buf, res.ptr);
}

double parse_double(const std::string& field, const std::string& line) {
  double x = 0.0;
  auto res = std::from_chars(field.data(), field.data() + field.size(), x);
  if (res.ec != std::errc{} || res.ptr != field.data() + field.size()) {
    throw CorruptLine("metrics csv: bad number '" + field + "' in line: " + line);
  }
  return x;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, ',')) fields.push_back(cur);
  if (!line.empty() && line.back() == ',') fields.push_back("");
  return fields;
}

}  // namespace

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("metrics csv: cannot open " + path + " for writing");
  out << kMetricsHeader << '\n';
  std::string line;
  for (const MetricsRow& r : rows) {
    line.clear();
    line += std::to_string(r.epoch);
    for (double x : {r.train_loss, r.test_loss, r.train_acc, r.test_acc, r.grad_E, r.grad_P,
                     r.grad_q, r.grad_V, r.grad_W, r.grad_U, r.error_term, r.bound}) {
      line += ',';
      append_double(line, x);
    }
    out << line << '\n';
  }
}

std::vector<MetricsRow> read_metrics_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("metrics csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader) {
    throw CorruptLine("metrics csv: missing or wrong header in " + path);
  }
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f = split_fields(line);
    if (f.size() != 13) {
      throw CorruptLine("metrics csv: expected 13 fields, got " + std::to_string(f.size()) +
                        " in line: " + line);
    }
    MetricsRow r;
    r.epoch = static_cast<int>(parse_double(f[0], line));
    double* slots[] = {&r.train_loss, &r.test_loss, &r.train_acc, &r.test_acc,
                       &r.grad_E,     &r.grad_P,    &r.grad_q,    &r.grad_V,
                       &r.grad_W,     &r.grad_U,    &r.error_term, &r.bound};
    for (int i = 0; i < 12; ++i) *slots[i] = parse_double(f[i + 1], line);
    rows.push_back(r);
  }
  return rows;
}

}  // namespace smadd
