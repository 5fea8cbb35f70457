# Runner for one candidate program.
#
# argv: program path, writable root, "1" to block network. The first stdin line is a nonce,
# printed on stdout only after the program ran to completion.
import os
import sys


def _main():
    nonce = sys.stdin.readline().strip()
    sys.stdin.close()
    prog_path = sys.argv[1]
    root = os.path.realpath(sys.argv[2])
    no_network = sys.argv[3] == "1"
    with open(prog_path, encoding="utf-8") as f:
        source = f.read()
    code = compile(source, prog_path, "exec")

    write_flags = os.O_WRONLY | os.O_RDWR | os.O_CREAT | os.O_APPEND | os.O_TRUNC
    realpath = os.path.realpath
    fsdecode = os.fsdecode
    sep = os.sep
    busy = [False]

    def inside(p):
        if isinstance(p, int):
            return True
        try:
            p = fsdecode(p)
        except Exception:
            return False
        full = realpath(p if p.startswith(sep) else root + sep + p)
        return full == root or full.startswith(root + sep)

    def deny(event):
        raise PermissionError("sandbox: %s is not permitted" % event)

    path_events = {
        "os.remove", "os.rmdir", "os.rename", "os.mkdir", "os.symlink", "os.link",
        "os.truncate", "os.chmod", "os.chown", "os.utime", "shutil.rmtree",
        "shutil.move", "shutil.copyfile", "shutil.copytree", "os.chdir", "os.chroot",
    }
    spawn_events = {
        "os.system", "os.exec", "os.posix_spawn", "os.spawn", "os.fork", "os.forkpty",
        "subprocess.Popen", "os.kill", "os.killpg", "pty.spawn", "os.startfile",
    }
    net_events = {
        "socket.connect", "socket.bind", "socket.sendto", "socket.sendmsg",
        "socket.getaddrinfo", "socket.gethostbyname", "socket.gethostbyaddr",
        "socket.getnameinfo",
    }

    def hook(event, args):
        if busy[0]:
            return
        busy[0] = True
        try:
            if event == "open":
                path, mode, flags = args
                writing = (mode is not None and any(c in mode for c in "wax+")) or (
                    flags is not None and flags & write_flags
                )
                if writing and not inside(path):
                    deny("writing %r" % (path,))
            elif event in path_events:
                for a in args:
                    if isinstance(a, (str, bytes, os.PathLike)) and not inside(a):
                        deny("%s on %r" % (event, a))
            elif event in spawn_events:
                deny(event)
            elif no_network and event in net_events:
                deny(event)
        finally:
            busy[0] = False

    sys.addaudithook(hook)
    namespace = {"__name__": "__main__", "__file__": prog_path, "__builtins__": __builtins__}
    exec(code, namespace)
    sys.stdout.flush()
    sys.stderr.flush()
    os.write(1, ("\n%s\n" % nonce).encode())


_main()
