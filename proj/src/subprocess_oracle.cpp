#include <csignal>
#include <cerrno>
#include <cstring>
#include <istream>
#include <ostream>
#include <thread>

#include <poll.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <json.hpp>

#include "textmill/oracle.hpp"

namespace textmill {

namespace {

using nlohmann::json;

json error_response(const json& id, const std::string& code, const std::string& message) {
  json r;
  r["v"] = kOracleProtocolVersion;
  r["id"] = id;
  r["error"] = {{"code", code}, {"message", message}};
  return r;
}

std::vector<TokenId> id_array(const json& req, const char* key, std::size_t vocab_size) {
  auto it = req.find(key);
  if (it == req.end() || !it->is_array()) {
    throw OracleError("bad_request", std::string("\"") + key + "\" must be an array");
  }
  std::vector<TokenId> ids;
  ids.reserve(it->size());
  for (const auto& v : *it) {
    if (!v.is_number_unsigned()) {
      throw OracleError("bad_request", std::string("\"") + key + "\" holds a non-id value");
    }
    const auto id = v.get<std::uint64_t>();
    if (id >= vocab_size) {
      throw OracleError("out_of_range", "token id " + std::to_string(id) + " >= vocab size " +
                                            std::to_string(vocab_size));
    }
    ids.push_back(static_cast<TokenId>(id));
  }
  return ids;
}

}  // namespace

std::string handle_oracle_request(const GenerationOracle& oracle, const std::string& line) {
  json req;
  try {
    req = json::parse(line);
  } catch (const json::exception& e) {
    return error_response(nullptr, "bad_request", e.what()).dump();
  }
  if (!req.is_object()) return error_response(nullptr, "bad_request", "not an object").dump();
  const json id = req.contains("id") ? req["id"] : json(nullptr);
  try {
    auto v = req.find("v");
    if (v == req.end() || !v->is_number_integer() || v->get<int>() != kOracleProtocolVersion) {
      throw OracleError("unsupported_version", "server speaks version " +
                                                   std::to_string(kOracleProtocolVersion));
    }
    auto op = req.find("op");
    if (op == req.end() || !op->is_string()) throw OracleError("bad_request", "missing op");
    json r;
    r["v"] = kOracleProtocolVersion;
    r["id"] = id;
    const std::string name = op->get<std::string>();
    if (name == "hello") {
      r["vocab_size"] = oracle.vocab_size();
    } else if (name == "greedy") {
      const auto ctx = id_array(req, "context", oracle.vocab_size());
      auto n = req.find("max_new");
      if (n == req.end() || !n->is_number_unsigned() || n->get<std::uint64_t>() > (1u << 20)) {
        throw OracleError("bad_request", "\"max_new\" must be an integer in [0, 2^20]");
      }
      r["tokens"] = oracle.greedy_continue(ctx, n->get<std::size_t>());
    } else if (name == "logprob") {
      const auto ctx = id_array(req, "context", oracle.vocab_size());
      const auto cont = id_array(req, "continuation", oracle.vocab_size());
      r["logprob"] = oracle.logprob(ctx, cont);
    } else {
      throw OracleError("unknown_op", "unknown op \"" + name + "\"");
    }
    return r.dump();
  } catch (const OracleError& e) {
    const std::string what = e.what();
    return error_response(id, e.code(), what.substr(e.code().size() + 2)).dump();
  } catch (const std::exception& e) {
    return error_response(id, "internal", e.what()).dump();
  }
}

std::size_t serve_oracle(const GenerationOracle& oracle, std::istream& in, std::ostream& out) {
  std::size_t served = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    out << handle_oracle_request(oracle, line) << '\n';
    out.flush();
    ++served;
  }
  return served;
}

SubprocessOracle::SubprocessOracle(std::vector<std::string> argv,
                                   std::chrono::milliseconds timeout)
    : timeout_(timeout) {
  if (argv.empty()) throw ValidationError("oracle command is empty");
  int fds[2];
  if (socketpair(AF_UNIX, SOCK_STREAM, 0, fds) != 0) {
    throw IoError(std::string("socketpair: ") + std::strerror(errno));
  }
  std::vector<char*> args;
  for (auto& a : argv) args.push_back(a.data());
  args.push_back(nullptr);

  const pid_t pid = fork();
  if (pid < 0) {
    close(fds[0]);
    close(fds[1]);
    throw IoError(std::string("fork: ") + std::strerror(errno));
  }
  if (pid == 0) {
    close(fds[0]);
    dup2(fds[1], STDIN_FILENO);
    dup2(fds[1], STDOUT_FILENO);
    close(fds[1]);
    execvp(args[0], args.data());
    _exit(127);
  }
  close(fds[1]);
  pid_ = pid;
  to_child_ = fds[0];
  from_child_ = fds[0];

  json hello = {{"v", kOracleProtocolVersion}, {"id", next_id_}, {"op", "hello"}};
  try {
    const json r = json::parse(round_trip(hello.dump()));
    if (r.contains("error")) {
      throw OracleError(r["error"].value("code", "error"), r["error"].value("message", ""));
    }
    vocab_size_ = r.at("vocab_size").get<std::size_t>();
  } catch (const json::exception& e) {
    shutdown();
    throw OracleError("protocol", std::string("bad hello response: ") + e.what());
  } catch (...) {
    shutdown();
    throw;
  }
}

SubprocessOracle::~SubprocessOracle() { shutdown(); }

void SubprocessOracle::shutdown() const {
  if (to_child_ >= 0) close(to_child_);
  to_child_ = from_child_ = -1;
  if (pid_ > 0) {
    int status = 0;
    for (int i = 0; i < 50; ++i) {
      if (waitpid(pid_, &status, WNOHANG) == pid_) {
        pid_ = -1;
        return;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    kill(pid_, SIGKILL);
    waitpid(pid_, &status, 0);
    pid_ = -1;
  }
}

std::string SubprocessOracle::round_trip(const std::string& request) const {
  if (to_child_ < 0) throw OracleError("closed", "oracle process is not running");
  const std::string msg = request + "\n";
  std::size_t sent = 0;
  while (sent < msg.size()) {
    const ssize_t n = send(to_child_, msg.data() + sent, msg.size() - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      shutdown();
      throw OracleError("closed", std::string("write to oracle failed: ") + std::strerror(errno));
    }
    sent += static_cast<std::size_t>(n);
  }

  const auto deadline = std::chrono::steady_clock::now() + timeout_;
  while (true) {
    if (auto nl = buffer_.find('\n'); nl != std::string::npos) {
      std::string line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      return line;
    }
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
        deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) {
      shutdown();
      throw OracleError("timeout", "no response within " + std::to_string(timeout_.count()) +
                                       " ms");
    }
    pollfd p{from_child_, POLLIN, 0};
    const int ready = poll(&p, 1, static_cast<int>(left.count()));
    if (ready < 0 && errno == EINTR) continue;
    if (ready <= 0) continue;
    char chunk[65536];
    const ssize_t n = read(from_child_, chunk, sizeof chunk);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) {
      shutdown();
      throw OracleError("closed", "oracle process closed its output");
    }
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

namespace {

json checked_response(const std::string& line, std::uint64_t id) {
  json r;
  try {
    r = json::parse(line);
  } catch (const json::exception& e) {
    throw OracleError("protocol", std::string("unparseable response: ") + e.what());
  }
  if (!r.is_object() || r.value("v", 0) != kOracleProtocolVersion) {
    throw OracleError("protocol", "response has the wrong protocol version");
  }
  if (!r.contains("id") || r["id"] != id) throw OracleError("protocol", "response id mismatch");
  if (r.contains("error")) {
    const json& e = r["error"];
    throw OracleError(e.value("code", "error"), e.value("message", ""));
  }
  return r;
}

}  // namespace

std::vector<TokenId> SubprocessOracle::greedy_continue(std::span<const TokenId> context,
                                                       std::size_t max_new) const {
  std::lock_guard lock(mutex_);
  const std::uint64_t id = ++next_id_;
  json req = {{"v", kOracleProtocolVersion}, {"id", id}, {"op", "greedy"},
              {"context", std::vector<TokenId>(context.begin(), context.end())},
              {"max_new", max_new}};
  const json r = checked_response(round_trip(req.dump()), id);
  try {
    auto tokens = r.at("tokens").get<std::vector<TokenId>>();
    if (tokens.size() > max_new) throw OracleError("protocol", "too many tokens returned");
    return tokens;
  } catch (const json::exception& e) {
    throw OracleError("protocol", e.what());
  }
}

double SubprocessOracle::logprob(std::span<const TokenId> context,
                                 std::span<const TokenId> continuation) const {
  std::lock_guard lock(mutex_);
  const std::uint64_t id = ++next_id_;
  json req = {{"v", kOracleProtocolVersion}, {"id", id}, {"op", "logprob"},
              {"context", std::vector<TokenId>(context.begin(), context.end())},
              {"continuation", std::vector<TokenId>(continuation.begin(), continuation.end())}};
  const json r = checked_response(round_trip(req.dump()), id);
  try {
    return r.at("logprob").get<double>();
  } catch (const json::exception& e) {
    throw OracleError("protocol", e.what());
  }
}

}  // namespace textmill
