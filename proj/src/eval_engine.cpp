#include "rtopt/eval_engine.hpp"

#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <condition_variable>
#include <deque>
#include <mutex>
#include <optional>
#include <thread>

#include "rtopt/dose_functions.hpp"
#include "rtopt/error.hpp"
#include "rtopt/problem_io.hpp"
#include "rtopt/wire.hpp"
#include "socket.hpp"

extern char** environ;

namespace rtopt {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

/// What a follower sends back for one phase.
struct Reply {
  std::optional<wire::PartialObjective> objective;
  std::vector<ConstraintEntry> constraints;
  std::optional<wire::ErrorReply> error;
};

/// The compute side of a follower; transport-agnostic.
class Follower {
 public:
  Follower(std::shared_ptr<const TreatmentProblem> problem, const WorkerAssignment& assignment,
           std::uint32_t worker_id)
      : problem_(std::move(problem)),
        worker_id_(worker_id),
        objective_terms_(assignment.objectives.items_of(worker_id)),
        constraint_terms_(assignment.constraints.items_of(worker_id)) {}

  Reply handle(const wire::EvalRequest& req) {
    Reply reply;
    EvalProfile profile;
    try {
      if (req.phase == wire::Phase::Objective) {
        ++timing_.objective_requests;
        wire::PartialObjective part;
        part.has_grad = req.want_grad;
        if (req.want_grad) part.grad.assign(problem_->num_vars, 0.0);
        accumulate_objective_terms(*problem_, objective_terms_, req.x, req.want_grad, part.value, part.grad,
                                   &profile, static_cast<int>(worker_id_));
        reply.objective = std::move(part);
      } else {
        ++timing_.constraint_requests;
        reply.constraints = evaluate_constraint_terms(*problem_, constraint_terms_, req.x, req.want_grad, &profile,
                                                      static_cast<int>(worker_id_));
      }
    } catch (const EvalError& e) {
      reply = Reply{};
      reply.error = wire::ErrorReply{worker_id_, static_cast<std::uint32_t>(e.term_id()), e.detail()};
    } catch (const std::exception& e) {
      reply = Reply{};
      reply.error = wire::ErrorReply{worker_id_, wire::kNoTerm, e.what()};
    }
    timing_.matvec_seconds += profile.matvec_seconds;
    timing_.function_seconds += profile.function_seconds;
    return reply;
  }

  WorkerTiming& timing() { return timing_; }
  std::uint32_t id() const { return worker_id_; }
  const std::vector<std::size_t>& constraint_terms() const { return constraint_terms_; }

 private:
  std::shared_ptr<const TreatmentProblem> problem_;
  std::uint32_t worker_id_;
  std::vector<std::size_t> objective_terms_;
  std::vector<std::size_t> constraint_terms_;
  WorkerTiming timing_;
};

template <typename T>
class Mailbox {
 public:
  void push(T value) {
    {
      std::lock_guard lock(mutex_);
      items_.push_back(std::move(value));
    }
    cv_.notify_one();
  }

  T pop() {
    std::unique_lock lock(mutex_);
    cv_.wait(lock, [&] { return !items_.empty(); });
    T value = std::move(items_.front());
    items_.pop_front();
    return value;
  }

 private:
  std::mutex mutex_;
  std::condition_variable cv_;
  std::deque<T> items_;
};

class WorkerLink {
 public:
  virtual ~WorkerLink() = default;
  virtual void send(const wire::EvalRequest& req) = 0;
  virtual Reply receive() = 0;
  /// Sends done, waits for the follower to exit and returns its timing. Never throws.
  virtual WorkerTiming stop() noexcept = 0;
};

class InProcessLink final : public WorkerLink {
 public:
  InProcessLink(std::shared_ptr<const TreatmentProblem> problem, const WorkerAssignment& assignment,
                std::uint32_t worker_id)
      : follower_(std::move(problem), assignment, worker_id), thread_([this] { run(); }) {}

  ~InProcessLink() override { stop(); }

  void send(const wire::EvalRequest& req) override { requests_.push(req); }
  Reply receive() override { return replies_.pop(); }

  WorkerTiming stop() noexcept override {
    if (thread_.joinable()) {
      requests_.push(wire::EvalRequest{wire::Phase::Objective, false, true, {}});
      thread_.join();
    }
    return follower_.timing();
  }

 private:
  void run() {
    const auto start = Clock::now();
    auto& timing = follower_.timing();
    while (true) {
      const auto t0 = Clock::now();
      wire::EvalRequest req = requests_.pop();
      timing.wait_seconds += seconds_since(t0);
      if (req.done) break;
      replies_.push(follower_.handle(req));
    }
    timing.wall_seconds = seconds_since(start);
  }

  Follower follower_;
  Mailbox<wire::EvalRequest> requests_;
  Mailbox<Reply> replies_;
  std::thread thread_;
};

class SocketLink final : public WorkerLink {
 public:
  SocketLink(net::UniqueFd fd, std::uint32_t worker_id, std::uint64_t num_vars, net::Timeout reply_timeout)
      : fd_(std::move(fd)), worker_id_(worker_id), num_vars_(num_vars), reply_timeout_(reply_timeout) {}

  ~SocketLink() override { stop(); }

  void handshake(const wire::Handshake& hs, net::Timeout timeout) {
    if (net::write_message(fd_.get(), hs) != net::IoStatus::Ok) lost("connection closed during handshake");
    net::Frame frame;
    const auto status = net::read_frame(fd_.get(), frame, timeout);
    if (status != net::IoStatus::Ok) lost("no handshake reply");
    const auto msg = wire::decode(frame.tag, frame.payload);
    if (const auto* err = std::get_if<wire::ErrorReply>(&msg)) {
      throw Error(ErrorCode::TransportError, "worker " + std::to_string(worker_id_) +
                                                 " rejected handshake: " + err->message);
    }
    if (!std::holds_alternative<wire::Ready>(msg)) {
      throw Error(ErrorCode::TransportError, "worker " + std::to_string(worker_id_) + " sent unexpected handshake reply");
    }
  }

  void send(const wire::EvalRequest& req) override {
    if (net::write_message(fd_.get(), req) != net::IoStatus::Ok) lost("connection closed while sending request");
  }

  Reply receive() override {
    net::Frame frame;
    const auto status = net::read_frame(fd_.get(), frame, reply_timeout_);
    if (status == net::IoStatus::Closed) lost("connection closed");
    if (status == net::IoStatus::TimedOut) lost("no reply within timeout");
    const auto msg = wire::decode(frame.tag, frame.payload);
    Reply reply;
    if (const auto* obj = std::get_if<wire::PartialObjective>(&msg)) {
      if (obj->has_grad && obj->grad.size() != num_vars_) protocol("objective gradient has wrong length");
      reply.objective = *obj;
    } else if (const auto* cons = std::get_if<wire::PartialConstraints>(&msg)) {
      for (const auto& e : cons->entries) {
        ConstraintEntry entry{e.index, e.value, {}};
        if (e.has_grad) entry.grad = wire::densify(e.row, num_vars_);
        reply.constraints.push_back(std::move(entry));
      }
    } else if (const auto* err = std::get_if<wire::ErrorReply>(&msg)) {
      reply.error = *err;
    } else {
      protocol("unexpected message tag " + std::to_string(static_cast<int>(frame.tag)));
    }
    return reply;
  }

  WorkerTiming stop() noexcept override {
    if (!fd_) return timing_;
    try {
      if (net::write_message(fd_.get(), wire::EvalRequest{wire::Phase::Objective, false, true, {}}) ==
          net::IoStatus::Ok) {
        // Skip any reply left over from an aborted phase until the timing report arrives.
        net::Frame frame;
        while (net::read_frame(fd_.get(), frame, std::chrono::seconds(5)) == net::IoStatus::Ok) {
          if (frame.tag == wire::Tag::TimingReport) {
            timing_ = std::get<wire::TimingReport>(wire::decode(frame.tag, frame.payload)).timing;
            break;
          }
        }
      }
    } catch (...) {
    }
    fd_.reset();
    return timing_;
  }

 private:
  [[noreturn]] void lost(const std::string& why) { throw WorkerLost(static_cast<int>(worker_id_), why); }
  [[noreturn]] void protocol(const std::string& why) {
    throw Error(ErrorCode::TransportError, "worker " + std::to_string(worker_id_) + ": " + why);
  }

  net::UniqueFd fd_;
  std::uint32_t worker_id_;
  std::uint64_t num_vars_;
  net::Timeout reply_timeout_;
  WorkerTiming timing_;
};

pid_t spawn_worker(const std::string& exe, const std::string& endpoint, const std::string& problem_path) {
  std::vector<std::string> args = {exe, "worker", "--connect", endpoint, "--problem", problem_path};
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  argv.push_back(nullptr);
  pid_t pid = 0;
  const int rc = ::posix_spawn(&pid, exe.c_str(), nullptr, nullptr, argv.data(), environ);
  if (rc != 0) {
    throw Error(ErrorCode::TransportError, "cannot spawn worker '" + exe + "': " + std::strerror(rc));
  }
  return pid;
}

/// Waits up to `grace` for the children to exit, then kills the rest.
void reap(std::vector<pid_t>& pids, std::chrono::milliseconds grace) {
  const auto deadline = Clock::now() + grace;
  while (!pids.empty()) {
    std::erase_if(pids, [](pid_t pid) {
      int status = 0;
      const pid_t r = ::waitpid(pid, &status, WNOHANG);
      return r == pid || (r < 0 && errno == ECHILD);
    });
    if (pids.empty()) break;
    if (Clock::now() >= deadline) {
      for (pid_t pid : pids) {
        ::kill(pid, SIGKILL);
        ::waitpid(pid, nullptr, 0);
      }
      pids.clear();
      break;
    }
    ::usleep(2000);
  }
}

}  // namespace

struct EvalEngine::Impl {
  std::shared_ptr<const TreatmentProblem> problem;
  WorkerAssignment assignment;
  std::vector<std::unique_ptr<WorkerLink>> links;
  std::vector<pid_t> pids;
  std::filesystem::path temp_problem_file;
  EngineStats stats;
  double leader_eval_seconds = 0.0;
  std::optional<WorkerLost> lost;
  std::optional<TimingRecord> final_record;

  ~Impl() {
    try {
      finish();
    } catch (...) {
    }
  }

  TimingRecord finish() {
    if (final_record) return *final_record;
    TimingRecord record;
    for (auto& link : links) record.workers.push_back(link->stop());
    links.clear();
    reap(pids, std::chrono::seconds(5));
    if (!temp_problem_file.empty()) {
      std::error_code ec;
      std::filesystem::remove(temp_problem_file, ec);
    }
    record.leader_eval_seconds = leader_eval_seconds;
    record.evaluations = stats.evaluations;
    final_record = record;
    return record;
  }

  void start_socket(const SocketOptions& opts) {
    const auto k = assignment.num_workers;
    std::string problem_path = opts.problem_path.string();
    if (problem_path.empty()) {
      char tmpl[] = "/tmp/rtopt-problem-XXXXXX";
      const int fd = ::mkstemp(tmpl);
      if (fd < 0) throw Error(ErrorCode::IoError, "cannot create temporary problem file");
      ::close(fd);
      temp_problem_file = tmpl;
      save_problem(*problem, temp_problem_file);
      problem_path = temp_problem_file.string();
    }

    net::Endpoint bound;
    net::UniqueFd listener = net::listen_tcp(net::parse_endpoint(opts.listen), bound);
    const std::string endpoint = bound.host + ":" + std::to_string(bound.port);
    if (opts.on_listening) opts.on_listening(bound.port);
    if (opts.spawn_workers) {
      if (opts.worker_executable.empty()) {
        throw Error(ErrorCode::ConfigError, "socket transport needs a worker executable to spawn");
      }
      for (std::uint32_t w = 0; w < k; ++w) pids.push_back(spawn_worker(opts.worker_executable, endpoint, problem_path));
    }

    wire::Handshake hs;
    hs.problem_hash = problem_hash(*problem);
    hs.assignment = assignment;
    for (std::uint32_t w = 0; w < k; ++w) {
      auto fd = net::accept_one(listener.get(), opts.connect_timeout);
      auto link = std::make_unique<SocketLink>(std::move(fd), w, problem->num_vars, opts.reply_timeout);
      hs.worker_id = w;
      link->handshake(hs, opts.connect_timeout);
      links.push_back(std::move(link));
    }
  }

  std::vector<Reply> run_phase(const wire::EvalRequest& req) {
    std::vector<Reply> replies;
    replies.reserve(links.size());
    try {
      for (auto& link : links) {
        link->send(req);
        ++stats.requests_sent;
      }
      for (auto& link : links) {
        replies.push_back(link->receive());
        ++stats.replies_received;
      }
    } catch (const WorkerLost& e) {
      lost = e;
      throw;
    }
    for (const auto& r : replies) {
      if (r.error) {
        const auto term = r.error->term == wire::kNoTerm ? static_cast<std::size_t>(-1) : r.error->term;
        throw EvalError(static_cast<int>(r.error->worker), term, r.error->message);
      }
    }
    return replies;
  }

  EvalResult evaluate(std::span<const double> x, bool want_grad) {
    if (final_record) throw Error(ErrorCode::TransportError, "engine already shut down");
    if (lost) throw *lost;
    if (x.size() != problem->num_vars) {
      throw Error(ErrorCode::DimensionMismatch, "x has " + std::to_string(x.size()) + " entries, problem has " +
                                                    std::to_string(problem->num_vars));
    }
    const auto t0 = Clock::now();
    ++stats.evaluations;
    EvalResult result;
    if (links.empty()) {
      result = evaluate_serial(*problem, x, want_grad);
      leader_eval_seconds += seconds_since(t0);
      return result;
    }

    wire::EvalRequest req{wire::Phase::Objective, want_grad, false, std::vector<double>(x.begin(), x.end())};
    auto objective_replies = run_phase(req);
    ++stats.objective_phases;
    for (std::size_t w = 0; w < objective_replies.size(); ++w) {
      auto& part = objective_replies[w].objective;
      if (!part) throw Error(ErrorCode::TransportError, "worker " + std::to_string(w) + " sent no objective part");
      if (w == 0) {
        result.objective = part->value;
        result.objective_grad = std::move(part->grad);
      } else {
        result.objective += part->value;
        for (std::size_t j = 0; j < result.objective_grad.size(); ++j) result.objective_grad[j] += part->grad[j];
      }
    }

    const auto m = problem->constraints.size();
    if (m > 0) {
      req.phase = wire::Phase::Constraints;
      auto constraint_replies = run_phase(req);
      ++stats.constraint_phases;
      result.constraint_values.assign(m, 0.0);
      if (want_grad) result.constraint_jacobian.assign(m, {});
      std::vector<bool> seen(m, false);
      for (std::size_t w = 0; w < constraint_replies.size(); ++w) {
        for (auto& entry : constraint_replies[w].constraints) {
          if (entry.index >= m || seen[entry.index] || assignment.constraints.owner[entry.index] != w) {
            throw Error(ErrorCode::TransportError, "worker " + std::to_string(w) + " returned constraint " +
                                                       std::to_string(entry.index) + " it does not own");
          }
          seen[entry.index] = true;
          result.constraint_values[entry.index] = entry.value;
          if (want_grad) result.constraint_jacobian[entry.index] = std::move(entry.grad);
        }
      }
      if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
        throw Error(ErrorCode::TransportError, "constraint phase left some constraints unanswered");
      }
    }
    leader_eval_seconds += seconds_since(t0);
    return result;
  }
};

EvalEngine::EvalEngine(std::shared_ptr<const TreatmentProblem> problem, const WorkerAssignment& assignment,
                       const EngineOptions& options)
    : impl_(std::make_unique<Impl>()) {
  if (!problem) throw Error(ErrorCode::ConfigError, "engine needs a problem");
  impl_->problem = std::move(problem);
  impl_->assignment = assignment;
  if (assignment.num_workers == 0) return;
  check_assignment(*impl_->problem, assignment);
  if (options.transport == TransportKind::InProcess) {
    for (std::uint32_t w = 0; w < assignment.num_workers; ++w) {
      impl_->links.push_back(std::make_unique<InProcessLink>(impl_->problem, assignment, w));
    }
  } else {
    impl_->start_socket(options.socket);
  }
}

EvalEngine::~EvalEngine() = default;
EvalEngine::EvalEngine(EvalEngine&&) noexcept = default;
EvalEngine& EvalEngine::operator=(EvalEngine&&) noexcept = default;

EvalResult EvalEngine::evaluate(std::span<const double> x, bool want_grad) { return impl_->evaluate(x, want_grad); }
TimingRecord EvalEngine::shutdown() { return impl_->finish(); }
std::uint32_t EvalEngine::num_workers() const { return impl_->assignment.num_workers; }
const TreatmentProblem& EvalEngine::problem() const { return *impl_->problem; }
EngineStats EvalEngine::stats() const { return impl_->stats; }
std::vector<int> EvalEngine::worker_pids() const { return {impl_->pids.begin(), impl_->pids.end()}; }

std::unique_ptr<EvalEngine> start_workers(std::shared_ptr<const TreatmentProblem> problem,
                                          const WorkerAssignment& assignment, const EngineOptions& options) {
  return std::make_unique<EvalEngine>(std::move(problem), assignment, options);
}

EvalResult evaluate_serial(const TreatmentProblem& problem, std::span<const double> x, bool want_grad) {
  EvalResult result;
  auto obj = eval_weighted_objective(problem, x, want_grad);
  result.objective = obj.value;
  result.objective_grad = std::move(obj.grad);
  auto cons = eval_constraints(problem, x, want_grad);
  result.constraint_values = std::move(cons.values);
  result.constraint_jacobian = std::move(cons.jacobian);
  return result;
}

int run_socket_worker(const std::string& leader_endpoint, const TreatmentProblem& problem) {
  const auto start = Clock::now();
  auto shared = std::make_shared<const TreatmentProblem>(problem);
  net::UniqueFd fd = net::connect_tcp(net::parse_endpoint(leader_endpoint), std::chrono::seconds(10));

  net::Frame frame;
  if (net::read_frame(fd.get(), frame, std::chrono::seconds(30)) != net::IoStatus::Ok) return 1;
  const auto first = wire::decode(frame.tag, frame.payload);
  const auto* hs = std::get_if<wire::Handshake>(&first);
  if (!hs) return 1;
  const auto reject = [&](const std::string& why) {
    net::write_message(fd.get(), wire::ErrorReply{hs->worker_id, wire::kNoTerm, why});
    return 1;
  };
  if (hs->problem_hash != problem_hash(problem)) return reject("problem hash mismatch");
  if (hs->worker_id >= hs->assignment.num_workers) return reject("worker id out of range");
  try {
    check_assignment(problem, hs->assignment);
  } catch (const Error& e) {
    return reject(e.what());
  }
  Follower follower(shared, hs->assignment, hs->worker_id);
  if (net::write_message(fd.get(), wire::Ready{}) != net::IoStatus::Ok) return 1;

  auto& timing = follower.timing();
  while (true) {
    const auto t0 = Clock::now();
    if (net::read_frame(fd.get(), frame, net::Timeout{0}) != net::IoStatus::Ok) return 1;
    timing.wait_seconds += seconds_since(t0);
    const auto msg = wire::decode(frame.tag, frame.payload);
    const auto* req = std::get_if<wire::EvalRequest>(&msg);
    if (!req) return 1;
    if (req->done) break;
    Reply reply = follower.handle(*req);
    net::IoStatus status;
    if (reply.error) {
      status = net::write_message(fd.get(), *reply.error);
    } else if (reply.objective) {
      status = net::write_message(fd.get(), *reply.objective);
    } else {
      wire::PartialConstraints part;
      for (const auto& e : reply.constraints) {
        part.entries.push_back({static_cast<std::uint32_t>(e.index), e.value, req->want_grad,
                                req->want_grad ? wire::sparsify(e.grad) : decltype(wire::ConstraintRow::row){}});
      }
      status = net::write_message(fd.get(), part);
    }
    if (status != net::IoStatus::Ok) return 1;
  }
  timing.wall_seconds = seconds_since(start);
  net::write_message(fd.get(), wire::TimingReport{timing});
  return 0;
}

double amdahl_predict(double serial_seconds, double parallel_seconds, std::uint32_t workers) {
  return serial_seconds + parallel_seconds / static_cast<double>(std::max<std::uint32_t>(workers, 1));
}

}  // namespace rtopt
